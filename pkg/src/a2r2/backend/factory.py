"""Backend construction from endpoint URIs."""

from __future__ import annotations

from urllib.parse import urlsplit

from ..core.config import ConfigError, RunConfig
from .base import Backend
from .http import HttpBackend
from .scripted import ScriptedBackend


def create_backend(config: RunConfig) -> Backend:
    """Build the backend named by ``config.backend_endpoint``.

    ``mock:`` selects the scripted backend (query parameters configure it);
    ``http://`` and ``https://`` select the HTTP client.
    """
    endpoint = config.backend_endpoint
    parts = urlsplit(endpoint)
    if parts.scheme == "mock":
        try:
            # the run seed backs any mock that does not pin its own
            return ScriptedBackend.from_query(parts.query, default_seed=config.seed)
        except ValueError as exc:
            raise ConfigError(f"bad mock endpoint {endpoint!r}: {exc}") from exc
    if parts.scheme in ("http", "https"):
        return HttpBackend(
            endpoint,
            retry_attempts=config.retry_attempts,
            retry_backoff=config.retry_backoff,
        )
    raise ConfigError(
        f"unsupported backend endpoint {endpoint!r}; use mock:?... or http(s)://"
    )
