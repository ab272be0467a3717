"""HTTP service around one loaded session.

One process serves one dataset, one active model, and one steering state.
Reads take a consistent (model, weights, revision) snapshot; writes (weight
updates, the post-retrain model swap) are serialized through the session
lock. The revision counter advances on every visible mutation, so cached
payloads can key on it and clients can detect staleness.
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from starlette.exceptions import HTTPException as StarletteHTTPException

from .data import Dataset, SignatureMatrix, Split
from .diagnostics import (
    SIDES,
    SORT_KEYS,
    DiagnosticsSummary,
    sort_attributes,
    stacking_order,
)
from .model import MappingModel, Metrics, TrainConfig, evaluate
from .projection import ProjectionResult, TsneConfig, default_perplexity, project
from .steering import (
    RetrainJob,
    SteeringState,
    adjust_weight,
    diag_class_counts,
    diagnose,
    retrain,
)


class ApiError(Exception):
    """Error surfaced to the client as {error, code} with an HTTP status."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class Session:
    """Dataset, split, signatures, active model, and steering state.

    Diagnostics summaries are cached per (revision, selected categories); any
    mutation clears the cache, so a cached summary always matches the active
    model and current weights.
    """

    def __init__(
        self,
        dataset: Dataset,
        split: Split,
        signatures: SignatureMatrix,
        model: MappingModel,
        config: TrainConfig,
        tsne: TsneConfig | None = None,
        eval_unseen: bool = False,
    ):
        self.dataset = dataset
        self.split = split
        self.signatures = signatures
        self.config = config
        self.eval_unseen = bool(eval_unseen)

        self._lock = threading.Lock()
        self._model = model
        self._steering = SteeringState.initial(dataset.n_attributes)
        self._revision = 0
        self._summaries: dict[tuple[int, tuple[int, ...]], DiagnosticsSummary] = {}
        self._jobs: dict[int, RetrainJob] = {}
        self._job_unseen: dict[int, tuple[Metrics | None, Metrics | None]] = {}
        self._active_job: int | None = None
        self._next_job_id = 1

        self._diag_counts = diag_class_counts(dataset, split)
        self._unseen_instances = np.flatnonzero(
            np.isin(dataset.labels, list(split.unseen_classes))
        )
        if tsne is None:
            tsne = TsneConfig(perplexity=default_perplexity(dataset.n_classes))
        seen_mask = np.zeros(dataset.n_classes, dtype=bool)
        seen_mask[list(split.seen_classes)] = True
        self.projection: ProjectionResult = project(
            signatures.signatures, tsne, seen_mask
        )

    # -- snapshots and caching -------------------------------------------

    def snapshot(self) -> tuple[MappingModel, SteeringState, int]:
        with self._lock:
            return self._model, self._steering, self._revision

    def _summary_for(
        self,
        selection: tuple[int, ...],
        model: MappingModel,
        state: SteeringState,
        revision: int,
    ) -> DiagnosticsSummary:
        key = (revision, selection)
        with self._lock:
            cached = self._summaries.get(key)
        if cached is not None:
            return cached
        summary = diagnose(
            model, self.dataset, self.split, self.signatures, state.weights,
            selected_categories=selection,
        )
        with self._lock:
            # A concurrent mutation may have moved the revision on; the entry
            # is then dead weight but never wrong, since it is keyed by the
            # revision it was computed under.
            self._summaries[key] = summary
        return summary

    def full_selection(self) -> tuple[int, ...]:
        return tuple(
            y for y in self.split.seen_classes if self._diag_counts.get(y, 0) > 0
        )

    # -- payload builders --------------------------------------------------

    def overview_payload(self) -> dict:
        _model, _state, revision = self.snapshot()
        seen = self.split.seen_set
        classes = []
        for i, name in enumerate(self.dataset.class_names):
            classes.append(
                {
                    "name": name,
                    "index": i,
                    "seen": i in seen,
                    "diag_count": self._diag_counts.get(i, 0),
                    "coords": [float(v) for v in self.projection.coords[i]],
                }
            )
        return {
            "classes": classes,
            "attributes": list(self.dataset.attribute_names),
            "revision": revision,
        }

    def _parse_selection(self, raw: str, expected: frozenset[int], what: str) -> tuple[int, ...]:
        indices = []
        for name in raw.split(","):
            name = name.strip()
            if not name:
                continue
            try:
                y = self.dataset.class_index(name)
            except ValueError:
                raise ApiError(400, "unknown_class", f"unknown class name: {name!r}") from None
            if y not in expected:
                raise ApiError(
                    400, "invalid_selection", f"class {name!r} is not {what}"
                )
            indices.append(y)
        return tuple(sorted(set(indices)))

    def diagnostics_payload(self, seen_raw: str, unseen_raw: str, sort: str) -> dict:
        if sort not in SORT_KEYS:
            raise ApiError(400, "invalid_sort", f"sort must be one of {SORT_KEYS}")
        seen_sel = self._parse_selection(seen_raw, self.split.seen_set, "a seen class")
        unseen_sel = self._parse_selection(unseen_raw, self.split.unseen_set, "an unseen class")
        if sort == "unseen_sum" and not unseen_sel:
            raise ApiError(
                400, "invalid_sort", "sort=unseen_sum needs at least one unseen class selected"
            )

        model, state, revision = self.snapshot()
        summary = self._summary_for(seen_sel, model, state, revision)
        unseen_rows = (
            self.signatures.signatures[list(unseen_sel)]
            if unseen_sel
            else np.zeros((0, self.dataset.n_attributes))
        )
        ordering = sort_attributes(
            summary, sort, unseen_rows if sort == "unseen_sum" else None
        )
        names = self.dataset.class_names
        return {
            "attributes": list(self.dataset.attribute_names),
            "categories": [names[y] for y in summary.selected_categories],
            "q_over": summary.q_over.tolist(),
            "q_under": summary.q_under.tolist(),
            "stacking": [names[y] for y in stacking_order(summary)],
            "ordering": list(ordering.order),
            "sort": sort,
            "unseen_signatures": {
                names[y]: [float(v) for v in self.signatures.signatures[y]]
                for y in unseen_sel
            },
            "weights": [float(v) for v in state.weights],
            "revision": revision,
        }

    def decomposition_payload(self, attr: int, cat: int, side: str) -> dict:
        if side not in SIDES:
            raise ApiError(400, "invalid_cell", f"side must be one of {SIDES}")
        if not 0 <= attr < self.dataset.n_attributes:
            raise ApiError(400, "invalid_cell", f"attribute index {attr} out of range")
        full = self.full_selection()
        if cat not in full:
            raise ApiError(
                400, "invalid_cell",
                f"category index {cat} is not a seen class with diagnostic instances",
            )
        model, state, revision = self.snapshot()
        summary = self._summary_for(full, model, state, revision)
        j = full.index(cat)
        total = float(summary.q_side(side)[attr, j])
        cell = summary.fp_breakdown.get((attr, cat, side), {})
        # Descending by contribution; ties resolved by class index so repeated
        # reads serialize identically.
        ordered = sorted(cell.items(), key=lambda kv: (-kv[1], kv[0]))
        names = self.dataset.class_names
        return {
            "attribute": attr,
            "category": cat,
            "category_name": names[cat],
            "side": side,
            "total": total,
            "breakdown": [
                {"predicted": names[pred], "value": float(v)} for pred, v in ordered
            ],
            "revision": revision,
        }

    def weights_payload(self) -> dict:
        _model, state, revision = self.snapshot()
        return {
            "weights": [float(v) for v in state.weights],
            "revision": revision,
            "below_guidance": state.below_guidance(),
        }

    def post_weight(self, attribute: int, delta: float) -> dict:
        with self._lock:
            try:
                self._steering = adjust_weight(self._steering, attribute, delta)
            except IndexError as e:
                raise ApiError(400, "invalid_attribute", str(e)) from None
            except (TypeError, ValueError) as e:
                raise ApiError(400, "invalid_delta", str(e)) from None
            self._revision += 1
            self._summaries.clear()
        return self.weights_payload()

    # -- metrics -----------------------------------------------------------

    def _diag_metrics(self, model: MappingModel, w: np.ndarray) -> Metrics:
        return evaluate(
            model, self.split.diag_instances, self.split.seen_classes,
            self.dataset, self.signatures, w,
        )

    def _unseen_metrics(self, model: MappingModel, w: np.ndarray) -> Metrics | None:
        if not self.eval_unseen or self._unseen_instances.size == 0:
            return None
        return evaluate(
            model, self._unseen_instances, self.split.unseen_classes,
            self.dataset, self.signatures, w,
        )

    def metrics_payload(self) -> dict:
        model, state, revision = self.snapshot()
        names = self.dataset.class_names
        unseen = self._unseen_metrics(model, state.weights)
        return {
            "diag": self._diag_metrics(model, state.weights).to_dict(names),
            "unseen": unseen.to_dict(names) if unseen is not None else None,
            "revision": revision,
        }

    # -- retraining ----------------------------------------------------------

    def start_retrain(self) -> dict:
        with self._lock:
            if self._active_job is not None:
                raise ApiError(409, "retrain_running", "a retrain job is already running")
            job = RetrainJob(id=self._next_job_id, base_revision=self._revision)
            self._next_job_id += 1
            self._jobs[job.id] = job
            self._active_job = job.id
            state = self._steering
            base_model = self._model
        thread = threading.Thread(
            target=self._run_retrain, args=(job, state, base_model), daemon=True
        )
        thread.start()
        return {"job_id": job.id, "status": job.status}

    def _run_retrain(self, job: RetrainJob, state: SteeringState, base: MappingModel) -> None:
        job.advance("running")
        try:
            before = self._diag_metrics(base, state.weights)
            unseen_before = self._unseen_metrics(base, state.weights)
            model, _report, _summary = retrain(
                self.dataset, self.split, self.signatures, state, self.config
            )
            after = self._diag_metrics(model, state.weights)
            unseen_after = self._unseen_metrics(model, state.weights)
            with self._lock:
                self._model = model
                self._revision += 1
                self._summaries.clear()
                job.metrics_before = before
                job.metrics_after = after
                self._job_unseen[job.id] = (unseen_before, unseen_after)
                job.advance("done")
                self._active_job = None
        except Exception as e:  # surfaced through the job, not the HTTP layer
            with self._lock:
                job.error = str(e)
                job.advance("failed")
                self._active_job = None

    def job_payload(self, job_id: int) -> dict:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise ApiError(404, "unknown_job", f"no retrain job with id {job_id}")
            out = job.to_dict(self.dataset.class_names)
            unseen = self._job_unseen.get(job_id)
        names = self.dataset.class_names
        out["unseen_before"] = unseen[0].to_dict(names) if unseen and unseen[0] else None
        out["unseen_after"] = unseen[1].to_dict(names) if unseen and unseen[1] else None
        return out


def create_app(session: Session | None = None, static_dir: str | None = None) -> FastAPI:
    """Build the FastAPI app. With session=None every /api route answers 503
    until attach_session is called."""
    app = FastAPI(title="zslens", docs_url=None, redoc_url=None)
    app.state.session = session

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.message, "code": exc.code}
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        msg = f"{'.'.join(str(p) for p in first.get('loc', ()))}: {first.get('msg', 'invalid request')}"
        return JSONResponse(status_code=400, content={"error": msg, "code": "bad_request"})

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(_request: Request, exc: StarletteHTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": str(exc.detail), "code": "http_error"},
        )

    def current() -> Session:
        s = app.state.session
        if s is None:
            raise ApiError(503, "not_ready", "dataset and model are not loaded yet")
        return s

    @app.get("/api/overview")
    def overview():
        return current().overview_payload()

    @app.get("/api/diagnostics")
    def diagnostics(seen: str = "", unseen: str = "", sort: str = "total"):
        return current().diagnostics_payload(seen, unseen, sort)

    @app.get("/api/decomposition")
    def decomposition(attr: int, cat: int, side: str):
        return current().decomposition_payload(attr, cat, side)

    @app.get("/api/weights")
    def get_weights():
        return current().weights_payload()

    @app.post("/api/weights")
    async def post_weights(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise ApiError(400, "bad_request", "body must be valid JSON") from None
        if not isinstance(body, dict) or "attr" not in body or "delta" not in body:
            raise ApiError(400, "bad_request", 'body must be {"attr": int, "delta": number}')
        attr, delta = body["attr"], body["delta"]
        if not isinstance(attr, int) or isinstance(attr, bool):
            raise ApiError(400, "invalid_attribute", "attr must be an integer index")
        if not isinstance(delta, (int, float)) or isinstance(delta, bool):
            raise ApiError(400, "invalid_delta", "delta must be a number")
        return current().post_weight(attr, float(delta))

    @app.post("/api/retrain")
    def post_retrain():
        return current().start_retrain()

    @app.get("/api/retrain/{job_id}")
    def retrain_status(job_id: int):
        return current().job_payload(job_id)

    @app.get("/api/metrics")
    def metrics():
        return current().metrics_payload()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def attach_session(app: FastAPI, session: Session) -> None:
    app.state.session = session
