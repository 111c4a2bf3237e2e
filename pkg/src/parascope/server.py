"""Session-oriented HTTP/WebSocket service around one model+prior pair.

Request/response work (field evaluation, marginal and variance grids)
goes over HTTP; each session also gets a persistent socket that streams
burn-in progress, sample batches, and terminal events pushed by the
background sampler thread for that session.  Model and prior are loaded
once per process and treated as immutable.
"""

import asyncio
import queue
import threading
import uuid
from dataclasses import dataclass, field, replace

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from . import binning, siren
from .errors import NotFound, NumericalError, StateError, ValidationError
from .features import FeatureSpec
from .hmc import HmcConfig, SampleSet, run_chains, variance_map

MAX_LABELS = 2
STREAM_POLL_SECONDS = 0.1


@dataclass
class FeatureRun:
    run_id: int
    spec: FeatureSpec
    cancel_event: threading.Event
    thread: threading.Thread | None = None
    state: str = "idle"  # idle / burn_in / streaming / done / cancelled / failed
    samples: SampleSet | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self) -> SampleSet | None:
        with self.lock:
            if self.samples is None or self.samples.count == 0:
                return None
            out = SampleSet.empty(self.samples.dim)
            out.extend(
                self.samples.z.copy(),
                self.samples.chain_id.copy(),
                0,
                self.samples.log_posterior.copy(),
            )
            out.step_index = self.samples.step_index.copy()
            out.accept_rate = self.samples.accept_rate
            return out


@dataclass
class Session:
    id: str
    index: int
    runs: dict = field(default_factory=dict)  # label -> FeatureRun
    events: queue.Queue = field(default_factory=queue.Queue)
    run_counter: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class ServerState:
    def __init__(self, model, prior, hmc_config: HmcConfig):
        self.model = model
        self.prior = prior
        self.hmc_config = hmc_config
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self.session_counter = 0

    def new_session(self) -> Session:
        with self.lock:
            self.session_counter += 1
            session = Session(id=uuid.uuid4().hex, index=self.session_counter)
            self.sessions[session.id] = session
        return session

    def get(self, sid: str) -> Session:
        try:
            return self.sessions[sid]
        except KeyError:
            raise NotFound(f"unknown session {sid!r}") from None


def _require(body: dict, key: str, problems: dict):
    if key not in body:
        problems[key] = "missing"
        return None
    return body[key]


def eval_field(state: ServerState, z, time: float, resolution: int):
    """Surrogate glyph grid at one (time, z); z may lie outside the box."""
    if state.model is None:
        raise StateError("no model loaded")
    problems = {}
    z = np.asarray(z, dtype=np.float64)
    d = state.model.space.dim
    if z.shape != (d,):
        problems["z"] = f"expected {d} components"
    elif not np.all(np.isfinite(z)):
        problems["z"] = "must be finite"
    if not -1.0 <= time <= 1.0:
        problems["time"] = "normalized time must lie in [-1, 1]"
    if not 2 <= resolution <= 128:
        problems["resolution"] = "must be in [2, 128]"
    if problems:
        raise ValidationError(problems)
    axis = np.linspace(-1.0, 1.0, resolution)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    coords = np.column_stack(
        [np.full(resolution * resolution, float(time)), yy.ravel(), xx.ravel()]
    )
    z_n = state.model.space.normalize(z)
    out = siren.forward(state.model, coords, z_n)
    return out.reshape(resolution, resolution, -1)


def _sampler_seed(state: ServerState, session: Session, label: int, run_id: int) -> int:
    # distinct, reproducible rng stream per (process seed, session, run)
    ss = np.random.SeedSequence(
        [state.hmc_config.seed, session.index, label, run_id]
    )
    return int(ss.generate_state(1)[0])


def _run_sampler(state: ServerState, session: Session, label: int, run: FeatureRun):
    cfg = replace(state.hmc_config, seed=_sampler_seed(state, session, label, run.run_id))

    def on_burnin(step):
        run.state = "burn_in"
        session.events.put({"event": "burnin", "step": step})

    def sink(batch):
        run.state = "streaming"
        with run.lock:
            run.samples.extend(
                np.asarray(batch["samples"], dtype=np.float64).reshape(-1, run.samples.dim),
                np.zeros(len(batch["samples"]), dtype=np.int64),
                batch["step"],
                np.zeros(len(batch["samples"])),
            )
            run.samples.accept_rate = batch["accept_rate"]
        session.events.put(batch)

    try:
        out = run_chains(
            cfg,
            state.prior,
            state.model,
            run.spec,
            sink=sink,
            cancel_event=run.cancel_event,
            progress_fn=on_burnin,
        )
    except NumericalError as err:  # containment: other labels stay usable
        run.state = "failed"
        session.events.put({"event": "error", "label": label, "message": str(err)})
        return
    if out.cancelled:
        run.state = "cancelled"
        session.events.put({"event": "cancelled"})
        return
    with run.lock:
        run.samples = out  # equals the accumulated batches by contract
    run.state = "done"
    session.events.put({"event": "done", "label": label})


def submit_feature(state: ServerState, session: Session, payload: dict) -> dict:
    """Validate, cancel any same-label run, and launch sampling."""
    if state.model is None:
        raise StateError("no model loaded")
    spec = FeatureSpec.from_dict(payload)
    spec.validate(dim=state.model.space.dim)
    if not 0 <= spec.label < MAX_LABELS:
        raise ValidationError({"label": f"label must be in [0, {MAX_LABELS})"})
    with session.lock:
        old = session.runs.get(spec.label)
        session.run_counter += 1
        run_id = session.run_counter
    if old is not None and old.thread is not None and old.thread.is_alive():
        old.cancel_event.set()
        old.thread.join(timeout=60.0)
    run = FeatureRun(run_id=run_id, spec=spec, cancel_event=threading.Event())
    run.samples = SampleSet.empty(state.model.space.dim)
    run.state = "burn_in"
    run.thread = threading.Thread(
        target=_run_sampler, args=(state, session, spec.label, run), daemon=True
    )
    with session.lock:
        session.runs[spec.label] = run
    run.thread.start()
    return {"run": run_id, "label": spec.label}


def _accumulated(session: Session, label: int) -> SampleSet:
    run = session.runs.get(label)
    if run is None:
        raise StateError(f"no feature submitted for label {label}")
    snap = run.snapshot()
    if snap is None:
        raise StateError(f"no samples accumulated yet for label {label}")
    return snap


def get_marginals(state: ServerState, session: Session, label: int, resolution: int) -> dict:
    snap = _accumulated(session, label)
    grids = binning.marginal_matrix(snap, state.model.space, resolution)
    return {
        "label": label,
        "count": snap.count,
        "accept_rate": snap.accept_rate,
        "grids": [g.to_wire() for g in grids],
    }


def get_variance(state: ServerState, session: Session, label: int, resolution: int, time: float) -> dict:
    snap = _accumulated(session, label)
    vm = variance_map(state.model, snap, resolution, time)
    return {
        "label": label,
        "resolution": resolution,
        "time": time,
        "values": vm.tolist(),
    }


def create_app(model, prior, hmc_config: HmcConfig | None = None) -> FastAPI:
    state = ServerState(model, prior, hmc_config or HmcConfig())
    app = FastAPI(title="parascope", docs_url=None, redoc_url=None)
    app.state.parascope = state

    @app.exception_handler(ValidationError)
    async def _invalid(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc), "fields": exc.fields})

    @app.exception_handler(StateError)
    async def _state(request, exc):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(NotFound)
    async def _missing(request, exc):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.post("/session")
    async def make_session():
        return {"id": state.new_session().id}

    @app.post("/session/{sid}/field")
    async def field_endpoint(sid: str, body: dict):
        session = state.get(sid)
        problems = {}
        z = _require(body, "z", problems)
        time = _require(body, "time", problems)
        if problems:
            raise ValidationError(problems)
        resolution = int(body.get("resolution", 32))
        vectors = await asyncio.to_thread(
            eval_field, state, z, float(time), resolution
        )
        return {"resolution": resolution, "vectors": vectors.tolist()}

    @app.post("/session/{sid}/feature")
    async def feature_endpoint(sid: str, body: dict):
        session = state.get(sid)
        return await asyncio.to_thread(submit_feature, state, session, body)

    @app.get("/session/{sid}/marginals")
    async def marginals_endpoint(sid: str, label: int = 0, res: int = 32):
        session = state.get(sid)
        return await asyncio.to_thread(get_marginals, state, session, label, res)

    @app.get("/session/{sid}/variance")
    async def variance_endpoint(sid: str, label: int = 0, res: int = 32, time: float = 0.0):
        session = state.get(sid)
        return await asyncio.to_thread(get_variance, state, session, label, res, time)

    @app.websocket("/session/{sid}/stream")
    async def stream_endpoint(ws: WebSocket, sid: str):
        try:
            session = state.get(sid)
        except NotFound:
            await ws.close(code=1008)
            return
        await ws.accept()
        try:
            while True:
                try:
                    msg = await asyncio.to_thread(
                        session.events.get, True, STREAM_POLL_SECONDS
                    )
                except queue.Empty:
                    continue
                await ws.send_json(msg)
        except (WebSocketDisconnect, RuntimeError):
            return

    return app
