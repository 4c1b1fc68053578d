"""Client for the service, used by the CLI.

By default requests run in-process against a fresh app instance; pass a
base URL to talk to a separately running server instead. Error bodies
produced by the service are converted back into ServiceError carrying
the same kind taxonomy (usage, io, numeric) so callers can map them to
exit codes.
"""

from __future__ import annotations

import httpx


class ServiceError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class ServiceClient:
    def __init__(self, base_url: str | None = None):
        if base_url is None:
            import warnings

            with warnings.catch_warnings():
                # some starlette builds deprecate their httpx-backed TestClient
                warnings.simplefilter("ignore", DeprecationWarning)
                warnings.simplefilter("ignore", UserWarning)
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)
        else:
            self._client = httpx.Client(base_url=base_url, timeout=600.0)

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def health(self) -> dict:
        return self._request("GET", "/health")

    def synth(self, payload: dict) -> dict:
        return self._request("POST", "/synth", payload)

    def train(self, payload: dict) -> dict:
        return self._request("POST", "/train", payload)

    def encode(self, payload: dict) -> dict:
        return self._request("POST", "/encode", payload)

    def retrieve(self, payload: dict) -> dict:
        return self._request("POST", "/retrieve", payload)

    def evaluate(self, payload: dict) -> dict:
        return self._request("POST", "/eval", payload)

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        try:
            resp = self._client.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            raise ServiceError("io", f"service request failed: {exc}") from exc
        if resp.status_code < 300:
            return resp.json()
        raise _to_error(resp)


def _to_error(resp: httpx.Response) -> ServiceError:
    try:
        detail = resp.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, dict) and "kind" in detail:
        return ServiceError(detail["kind"], str(detail.get("message", "")))
    # request-model validation rejections arrive as pydantic detail lists
    if resp.status_code == 422:
        return ServiceError("usage", f"invalid request: {detail}")
    kind = "numeric" if resp.status_code >= 500 else "usage"
    return ServiceError(kind, f"service returned {resp.status_code}: {resp.text}")
