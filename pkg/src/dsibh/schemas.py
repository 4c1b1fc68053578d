"""Experiment configuration and service request/response models.

Everything rejects unknown keys so a typo in a config file fails before
any compute starts.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import trainer

Direction = Literal["x->r", "r->x"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SynthDataConfig(StrictModel):
    classes: int = 4
    per_class: int = 250
    d1: int = 32
    d2: int = 32
    label_dim: int | None = None
    noise: float = 0.1
    multilabel_rate: float = 0.0
    seed: int = 0


class FilesDataConfig(StrictModel):
    x1: str
    x2: str
    labels: str


class SplitConfig(StrictModel):
    query_count: int = 0
    train_count: int = 0
    seed: int = 0


class NetConfig(StrictModel):
    hidden_dims: list[int] = Field(default_factory=lambda: [256])


class NetsSection(StrictModel):
    lab: NetConfig = Field(default_factory=NetConfig)
    img: NetConfig = Field(default_factory=NetConfig)
    txt: NetConfig = Field(default_factory=NetConfig)
    init_scale: float = 1.0

    def to_shapes(self) -> trainer.NetShapes:
        return trainer.NetShapes(
            hidden_lab=tuple(self.lab.hidden_dims),
            hidden_img=tuple(self.img.hidden_dims),
            hidden_txt=tuple(self.txt.hidden_dims),
            init_scale=self.init_scale,
        )


class TrainSection(StrictModel):
    code_bits: int = 16
    alpha: float = 2.0
    beta: float = 0.1
    gamma: float = 1.0
    eta: float = 1.0
    batch_size: int = 128
    lr_lab: float = 1e-3
    lr_img: float = 10.0**-4.5
    lr_txt: float = 10.0**-3.5
    iters_lab: int | None = None
    iters_img: int | None = None
    iters_txt: int | None = None
    outer_rounds: int = 50
    convergence_tol: float = 1e-4
    seed: int = 0
    optimizer: Literal["adam", "sgd"] = "adam"

    def to_train_config(self) -> trainer.TrainConfig:
        return trainer.TrainConfig(**self.model_dump())


class ExperimentConfig(StrictModel):
    synth: SynthDataConfig | None = None
    data: FilesDataConfig | None = None
    split: SplitConfig = Field(default_factory=SplitConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    nets: NetsSection = Field(default_factory=NetsSection)
    out_dir: str
    eval_directions: list[Direction] = Field(default_factory=lambda: ["x->r", "r->x"])
    csv: bool = False
    checkpoints: bool = False

    @model_validator(mode="after")
    def _one_data_source(self):
        if (self.synth is None) == (self.data is None):
            raise ValueError("exactly one of 'synth' or 'data' must be given")
        return self


class SynthRequest(StrictModel):
    synth: SynthDataConfig = Field(default_factory=SynthDataConfig)
    out_dir: str


class SynthResponse(StrictModel):
    files: dict[str, str]
    rows: int
    d1: int
    d2: int
    label_dim: int


class TrainRequest(StrictModel):
    config: ExperimentConfig
    threads: int = 1


class TrainResponse(StrictModel):
    files: dict[str, str]
    metrics: dict


class EncodeRequest(StrictModel):
    model_path: str
    features_path: str
    labels_path: str | None = None
    out_path: str


class EncodeResponse(StrictModel):
    path: str
    count: int
    code_bits: int


class RetrieveRequest(StrictModel):
    model_path: str
    query_features_path: str
    db_path: str
    k: int = 10


class RetrievedItem(StrictModel):
    id: int
    distance: int


class QueryResult(StrictModel):
    query_id: int
    items: list[RetrievedItem]


class RetrieveResponse(StrictModel):
    code_bits: int
    results: list[QueryResult]


class EvalRequest(StrictModel):
    query_db_path: str
    db_path: str
    direction: Direction = "x->r"
    radius: int | None = None
    threads: int = 1
    csv_path: str | None = None


class EvalResponse(StrictModel):
    direction: Direction
    code_bits: int
    map: float
    evaluated: int
    skipped: int
