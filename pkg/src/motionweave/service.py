"""HTTP service exposing parse/sample/generate/evaluate for the UI.

Generation runs on a single worker thread with a bounded queue; job records
move strictly forward (queued → running → done/failed). Models load lazily
from the checkpoint directory and are read-only afterwards.
"""

from __future__ import annotations

import itertools
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import pipeline as P
from . import semgraph
from .checkpoint import load_bundle
from .errors import MotionweaveError, NoActionFound
from .gat import graph_edges, guiding_weights, AttentionResult
from .motion import default_skeleton, playback_dict
from .nn import tensor as T


class ParseRequest(BaseModel):
    text: str = ""


class SampleActionsRequest(BaseModel):
    text: str = ""
    seeds: int = 3
    steps: tuple[int, int] = (15, 15)
    length: int = 60


class GenerateRequest(BaseModel):
    text: str = ""
    selected_action_ids: list[str] | None = None
    refs: list | None = None
    weight_multipliers: list[float] | None = None
    rho: float = 0.01
    steps: tuple[int, int, int] = (50, 50, 50)
    seed: int = 0
    length: int | None = None
    sync: bool = False


@dataclass
class JobRecord:
    id: str
    kind: str
    status: str = "queued"            # queued | running | done | failed
    request: dict = field(default_factory=dict)
    result: dict | None = None
    error: str | None = None
    created: float = field(default_factory=time.time)
    started: float | None = None
    finished: float | None = None

    _ORDER = ("queued", "running", "done", "failed")

    def advance(self, status: str):
        if self._ORDER.index(status) < self._ORDER.index(self.status):
            raise ValueError(f"illegal transition {self.status} -> {status}")
        self.status = status

    def to_dict(self):
        return {"id": self.id, "kind": self.kind, "status": self.status,
                "request": self.request, "result": self.result,
                "error": self.error, "created": self.created,
                "started": self.started, "finished": self.finished}


def create_app(models_dir, corpus_path=None, precision=None,
               queue_size: int = 16, start_worker: bool = True) -> FastAPI:
    app = FastAPI(title="motionweave", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    state = {
        "models": None,
        "lock": threading.Lock(),
        "jobs": {},
        "motions": {},
        "candidates": {},
        "job_counter": itertools.count(1),
        "motion_counter": itertools.count(1),
        "cand_counter": itertools.count(1),
    }
    work_queue: queue.Queue = queue.Queue(maxsize=queue_size)

    def models() -> P.ModelBundle:
        with state["lock"]:
            if state["models"] is None:
                try:
                    state["models"] = load_bundle(models_dir, corpus_path,
                                                  precision)
                except FileNotFoundError as exc:
                    raise HTTPException(409, detail={
                        "code": "models_not_loaded", "message": str(exc)})
            return state["models"]

    def store_motion(motion, diagnostics=None) -> str:
        mid = f"motion-{next(state['motion_counter']):06d}"
        payload = playback_dict(motion, default_skeleton())
        payload["features"] = motion.frames.tolist()
        if diagnostics is not None:
            payload["diagnostics"] = diagnostics
        with state["lock"]:
            state["motions"][mid] = payload
        return mid

    def run_generate(job: JobRecord):
        req = GenerateRequest(**job.request)
        bundle = models()
        refs = None
        ref_descs = None
        if req.selected_action_ids:
            refs, ref_descs = [], []
            for cid in req.selected_action_ids:
                cand = state["candidates"].get(cid)
                if cand is None:
                    raise MotionweaveError(f"unknown candidate id {cid!r}")
                refs.append(np.asarray(cand["latent"]))
                ref_descs.append(cand["text"])
        elif req.refs:
            refs = [np.asarray(r) for r in req.refs]
        plan = P.SamplingPlan(steps=tuple(req.steps), rho=req.rho,
                              seed=req.seed, length=req.length)
        if req.rho > 0 and refs is None and bundle.corpus is None:
            raise MotionweaveError(
                "guidance requires a corpus for retrieval, explicit refs, "
                "or selected candidates")
        motion, diag = P.sample(req.text, plan, bundle, refs=refs,
                                weight_multipliers=req.weight_multipliers,
                                ref_descriptions=ref_descs)
        mid = store_motion(motion, diag.to_dict())
        return {"motion_id": mid, "diagnostics": diag.to_dict()}

    def worker():
        while True:
            job = work_queue.get()
            if job is None:
                return
            job.advance("running")
            job.started = time.time()
            try:
                job.result = run_generate(job)
                job.advance("done")
            except (MotionweaveError, ValueError) as exc:
                job.error = str(exc)
                job.advance("failed")
            except Exception as exc:  # noqa: BLE001 - fail the job, keep serving
                job.error = f"internal error: {exc}"
                job.advance("failed")
            finally:
                job.finished = time.time()
                work_queue.task_done()

    if start_worker:
        thread = threading.Thread(target=worker, daemon=True)
        thread.start()

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/parse")
    def parse(req: ParseRequest):
        if not req.text.strip():
            raise HTTPException(400, detail={"code": "empty_text",
                                             "message": "text is required"})
        try:
            graph = semgraph.parse(req.text)
        except NoActionFound as exc:
            raise HTTPException(400, detail={"code": "no_action",
                                             "message": str(exc)})
        bundle = models()
        v = bundle.space.init_graph_nodes(graph)
        edges = graph_edges(graph)
        dt = bundle.denoisers.config.np_dtype
        coeffs_t, _ = bundle.denoisers.gat.forward(T.Tensor(v.astype(dt)),
                                                   edges)
        coeffs = {}
        flat = coeffs_t.data[:, 0]
        for k in range(len(edges)):
            coeffs[f"{int(edges.dst[k])}->{int(edges.src[k])}"] = float(flat[k])
        result = AttentionResult(
            {(int(edges.dst[k]), int(edges.src[k])): float(flat[k])
             for k in range(len(edges))}, v)
        lambdas = guiding_weights(result, graph, 0.01)
        return {"graph": graph.to_dict(),
                "local_actions": semgraph.local_action_descriptions(graph),
                "coefficients": coeffs,
                "lambdas": [float(x) for x in lambdas]}

    @app.post("/actions/sample")
    def sample_actions(req: SampleActionsRequest):
        if not req.text.strip():
            raise HTTPException(400, detail={"code": "empty_text",
                                             "message": "text is required"})
        bundle = models()
        try:
            candidates = []
            for k in range(req.seeds):
                plan = P.SamplingPlan(steps=(req.steps[0], req.steps[1], 1),
                                      seed=k)
                motion, latent = P.sample_local_action(req.text, plan, bundle,
                                                       length=req.length)
                cid = f"cand-{next(state['cand_counter']):06d}"
                preview = playback_dict(motion, default_skeleton())
                with state["lock"]:
                    state["candidates"][cid] = {"latent": latent.tolist(),
                                                "text": req.text}
                candidates.append({"id": cid, "seed": k, "preview": preview})
        except NoActionFound as exc:
            raise HTTPException(400, detail={"code": "no_action",
                                             "message": str(exc)})
        return {"text": req.text, "candidates": candidates}

    @app.post("/generate")
    def generate(req: GenerateRequest):
        if not req.text.strip():
            raise HTTPException(400, detail={"code": "empty_text",
                                             "message": "text is required"})
        models()  # fail fast with 409 before queueing
        job = JobRecord(f"job-{next(state['job_counter']):06d}", "generate",
                        request=req.model_dump())
        with state["lock"]:
            state["jobs"][job.id] = job
        if req.sync:
            job.advance("running")
            job.started = time.time()
            try:
                job.result = run_generate(job)
                job.advance("done")
            except (MotionweaveError, ValueError, NoActionFound) as exc:
                job.error = str(exc)
                job.advance("failed")
            job.finished = time.time()
            return {"job_id": job.id, "status": job.status,
                    "result": job.result, "error": job.error}
        try:
            work_queue.put_nowait(job)
        except queue.Full:
            with state["lock"]:
                del state["jobs"][job.id]
            raise HTTPException(503, detail={"code": "queue_full",
                                             "message": "job queue is full"})
        return {"job_id": job.id, "status": job.status}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = state["jobs"].get(job_id)
        if job is None:
            raise HTTPException(404, detail={"code": "unknown_job",
                                             "message": job_id})
        return job.to_dict()

    @app.get("/motions/{motion_id}")
    def get_motion(motion_id: str):
        motion = state["motions"].get(motion_id)
        if motion is None:
            raise HTTPException(404, detail={"code": "unknown_motion",
                                             "message": motion_id})
        return motion

    return app
