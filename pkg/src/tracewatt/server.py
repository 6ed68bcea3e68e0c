"""HTTP analysis service: compressed usage logs in, model artifacts out.

Uploads return immediately with a job id; the pipeline runs on a bounded
worker pool and the client polls job state, then fetches the artifact.
Each job persists to its own directory (raw upload, decompressed CSV,
job record, artifacts), so jobs are enumerable by directory listing and
artifacts are immutable once ranked.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, replace
from pathlib import Path

from fastapi import FastAPI, Header, Request, Response
from fastapi.responses import JSONResponse

from .errors import FormatError
from .ingest import ZIP_ENTRY_NAME, decompress_upload, parse_trace
from .pipeline import ARTIFACT_FILE, PipelineConfig, canonical_json, run_pipeline

JOB_STATES = ("received", "cleaning", "selecting", "benchmarking", "ranked", "failed")
_STATE_ORDER = {s: i for i, s in enumerate(JOB_STATES[:-1])}

DEFAULT_SIZE_CAP = 64 * 1024 * 1024


@dataclass(frozen=True)
class ServerConfig:
    """Service settings, loadable from a JSON file with env overrides."""

    host: str = "127.0.0.1"
    port: int = 8787
    data_dir: Path = Path("tracewatt-data")
    size_cap_bytes: int = DEFAULT_SIZE_CAP
    concurrency: int = 0  # 0 means one worker per CPU core
    seed: int = 0
    scenario: str = "all"

    @classmethod
    def from_file(cls, path: Path | None) -> "ServerConfig":
        doc = {}
        if path is not None:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = cls(
            host=doc.get("host", cls.host),
            port=int(doc.get("port", cls.port)),
            data_dir=Path(doc.get("data_dir", str(cls.data_dir))),
            size_cap_bytes=int(doc.get("size_cap_bytes", cls.size_cap_bytes)),
            concurrency=int(doc.get("concurrency", cls.concurrency)),
            seed=int(doc.get("seed", cls.seed)),
            scenario=doc.get("scenario", cls.scenario),
        )
        return cfg.with_env_overrides()

    def with_env_overrides(self) -> "ServerConfig":
        env = os.environ
        out = self
        if "TRACEWATT_HOST" in env:
            out = replace(out, host=env["TRACEWATT_HOST"])
        if "TRACEWATT_PORT" in env:
            out = replace(out, port=int(env["TRACEWATT_PORT"]))
        if "TRACEWATT_DATA_DIR" in env:
            out = replace(out, data_dir=Path(env["TRACEWATT_DATA_DIR"]))
        if "TRACEWATT_SIZE_CAP_BYTES" in env:
            out = replace(out, size_cap_bytes=int(env["TRACEWATT_SIZE_CAP_BYTES"]))
        if "TRACEWATT_CONCURRENCY" in env:
            out = replace(out, concurrency=int(env["TRACEWATT_CONCURRENCY"]))
        if "TRACEWATT_SEED" in env:
            out = replace(out, seed=int(env["TRACEWATT_SEED"]))
        if "TRACEWATT_SCENARIO" in env:
            out = replace(out, scenario=env["TRACEWATT_SCENARIO"])
        return out

    @property
    def workers(self) -> int:
        return self.concurrency if self.concurrency > 0 else (os.cpu_count() or 2)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(seed=self.seed, scenario=self.scenario)


@dataclass
class JobRecord:
    """State snapshot of one upload's journey through the pipeline."""

    job_id: str
    state: str = "received"
    rows: int | None = None
    source_id: str = ""
    result_ref: str | None = None
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "state": self.state,
            "trace_meta": {"rows": self.rows, "source_id": self.source_id},
            "result_ref": self.result_ref,
            "error": self.error,
        }


class JobManager:
    """Owns job records, their directories, and the worker pool.

    Each job executes at most once; record reads return plain snapshots
    and never mutate state. State only moves forward along JOB_STATES,
    with "failed" reachable from anywhere.
    """

    def __init__(self, config: ServerConfig):
        self.config = config
        self.jobs_dir = Path(config.data_dir) / "jobs"
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self._jobs: dict[str, JobRecord] = {}
        self._lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=config.workers)

    def shutdown(self) -> None:
        self._executor.shutdown(wait=False)

    def job_dir(self, job_id: str) -> Path:
        return self.jobs_dir / job_id

    def submit(self, payload: bytes, source_id: str) -> str:
        # Validate the container before creating any record: a corrupt
        # upload must leave no trace besides the 4xx response.
        csv_bytes = decompress_upload(payload)
        job_id = uuid.uuid4().hex
        job_dir = self.job_dir(job_id)
        job_dir.mkdir(parents=True)
        (job_dir / "upload.zip").write_bytes(payload)
        (job_dir / ZIP_ENTRY_NAME).write_bytes(csv_bytes)
        record = JobRecord(job_id=job_id, source_id=source_id)
        with self._lock:
            self._jobs[job_id] = record
        self._persist(record)
        self._executor.submit(self._run, job_id, csv_bytes, source_id)
        return job_id

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            record = self._jobs.get(job_id)
            return replace(record) if record is not None else None

    def artifact_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / ARTIFACT_FILE

    def _persist(self, record: JobRecord) -> None:
        path = self.job_dir(record.job_id) / "job.json"
        path.write_text(canonical_json(record.to_json_dict()), encoding="utf-8")

    def _update(self, job_id: str, **changes) -> None:
        with self._lock:
            record = self._jobs[job_id]
            new_state = changes.get("state")
            if new_state is not None and new_state != "failed":
                if _STATE_ORDER[new_state] < _STATE_ORDER[record.state]:
                    return  # transitions are monotone
            for key, value in changes.items():
                setattr(record, key, value)
            snapshot = replace(record)
        self._persist(snapshot)

    def _run(self, job_id: str, csv_bytes: bytes, source_id: str) -> None:
        try:
            trace = parse_trace(csv_bytes, source_id)
            self._update(job_id, rows=trace.n_rows)
            run_pipeline(
                trace,
                self.config.pipeline_config(),
                out_dir=self.job_dir(job_id),
                on_stage=lambda stage: self._update(job_id, state=stage)
                if stage in _STATE_ORDER
                else None,
            )
            self._update(job_id, state="ranked", result_ref=str(self.artifact_path(job_id)))
        except Exception as exc:  # any failure parks the job with its reason
            self._update(job_id, state="failed", error=f"{type(exc).__name__}: {exc}")


def create_app(config: ServerConfig) -> FastAPI:
    manager = JobManager(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        manager.shutdown()

    app = FastAPI(title="tracewatt analysis service", lifespan=lifespan)
    app.state.manager = manager

    @app.post("/api/v1/traces", status_code=202)
    async def upload_trace(request: Request, x_source_id: str = Header(default="")):
        payload = await request.body()
        if len(payload) > config.size_cap_bytes:
            return JSONResponse(
                status_code=413,
                content={"error": f"upload exceeds size cap of {config.size_cap_bytes} bytes"},
            )
        try:
            job_id = manager.submit(payload, x_source_id)
        except FormatError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        return {"job_id": job_id}

    @app.get("/api/v1/jobs/{job_id}")
    def get_job(job_id: str):
        record = manager.get(job_id)
        if record is None:
            return JSONResponse(status_code=404, content={"error": f"unknown job {job_id}"})
        return record.to_json_dict()

    @app.get("/api/v1/models/{job_id}")
    def get_model(job_id: str):
        record = manager.get(job_id)
        if record is None:
            return JSONResponse(status_code=404, content={"error": f"unknown job {job_id}"})
        if record.state == "failed":
            return JSONResponse(status_code=409, content={"error": record.error})
        if record.state != "ranked":
            return JSONResponse(
                status_code=409,
                content={"error": f"job not finished, state is {record.state!r}"},
            )
        # Serve the on-disk bytes so the download matches the artifact exactly.
        data = manager.artifact_path(job_id).read_bytes()
        return Response(content=data, media_type="application/json")

    return app


def serve(config: ServerConfig) -> None:
    """Blocking entry point used by the CLI's serve subcommand."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
