"""Read-only HTTP endpoint serving paper recommendations.

All artifacts are loaded (and digest-verified) once at startup; requests
touch only shared immutable state, so there are no locks on the read path
and a restart always reproduces the same responses.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Query
from fastapi.responses import JSONResponse

from .artifacts import load_bundle
from .corpus import CorpusStore
from .recommend import MissingVectorError, Recommender, items_payload


def create_app(store: CorpusStore, recommender: Recommender) -> FastAPI:
    """API over an already-loaded corpus and recommender."""
    app = FastAPI(title="paperrec", version="1.0", docs_url=None, redoc_url=None)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/recommendations/v1/papers/forpaper/{external_id}")
    def forpaper(
        external_id: str,
        method: Literal["cbf", "gb", "hybrid"] = "hybrid",
        limit: int = Query(default=10, ge=1),
    ):
        idx = store.resolve(external_id)
        if idx is None:
            return JSONResponse(
                status_code=404,
                content={"error": f"unknown paper id {external_id!r}"},
            )
        try:
            rec_list = recommender.papers_like_this(idx, method, limit)
        except MissingVectorError as exc:
            return JSONResponse(
                status_code=422,
                content={"error": str(exc), "missingSides": list(exc.sides)},
            )
        return {"recommendedPapers": items_payload(store, rec_list)}

    return app


def load_app(data_dir: str | Path) -> FastAPI:
    """Build the app from artifacts on disk; digest mismatches fail here."""
    bundle = load_bundle(Path(data_dir))
    return create_app(bundle.store, bundle.recommender())


def serve(data_dir: str | Path, host: str = "127.0.0.1", port: int = 8571) -> None:
    import uvicorn

    uvicorn.run(load_app(data_dir), host=host, port=port, log_level="warning")
