"""HTTP facade over stored artifacts, model inference, and planning sessions.

The app is a factory product: ``create_app(root)`` serves whatever the
artifact index at ``root`` references. Checkpoints and analysis bundles are
immutable; sessions are the only mutable state and each one serializes its
own updates behind a lock.
"""

from __future__ import annotations

import base64
import itertools
import tempfile
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import analysis as an
from . import planning as pl
from .cohort import load_manifest
from .gltf import mesh_to_glb
from .mesh import (CANONICAL_ATTRIBUTE_NAMES, CorrespondenceError, MeshError,
                   load_mesh)
from .sdvae import LATENT_DIM, attribute_slice, load_checkpoint
from .store import ArtifactStore, StoreError

__all__ = ["create_app"]

_SCOPES = ("whole",) + tuple(f"attribute_{k}" for k in range(len(CANONICAL_ATTRIBUTE_NAMES)))
_NAME_TO_INDEX = {n: i for i, n in enumerate(CANONICAL_ATTRIBUTE_NAMES)}


# ---------------------------------------------------------------------------
# Request bodies

class EncodeBody(BaseModel):
    data: str                      # base64 mesh file content
    format: str = "ply"            # obj | ply
    analysis: str | None = None    # analysis id for QDA labeling


class ProcedureBody(BaseModel):
    attributes: list[str]


class SessionBody(BaseModel):
    patient_id: str
    latent: list[float]
    model: str
    analysis: str
    procedure: str
    target: str | list[float] = "mu"
    t: float = 1.0
    stops: dict[str, float] = {}


class SessionPatch(BaseModel):
    t: float | None = None
    stops: dict[str, float] | None = None
    target: str | list[float] | None = None


def _parse_stops(raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        if key in _NAME_TO_INDEX:
            out[_NAME_TO_INDEX[key]] = float(value)
        elif key.isdigit():
            out[int(key)] = float(value)
        else:
            raise HTTPException(422, f"unknown attribute {key!r} in stops")
    return out


def _stops_view(stops: dict) -> dict:
    return {CANONICAL_ATTRIBUTE_NAMES[k]: v for k, v in sorted(stops.items())}


# ---------------------------------------------------------------------------
# Lazy artifact handles

class _LoadedModel:
    def __init__(self, model, config, meta):
        self.model = model
        self.config = config
        self.meta = meta
        self.lock = threading.Lock()  # inference guards its structure caches

    def encode_mean(self, mesh) -> np.ndarray:
        with self.lock:
            mu, _ = self.model.encode(mesh)
        return mu

    def generate_many(self, zs) -> np.ndarray:
        with self.lock:
            return self.model.generate_many(zs)


class _LoadedAnalysis:
    def __init__(self, bundle_path):
        with np.load(bundle_path, allow_pickle=False) as data:
            self.latents = np.asarray(data["latents"], dtype=np.float64)
            self.labels = np.asarray(data["labels"]).astype(str)
            self.split = np.asarray(data["split"]).astype(str)
            self.ids = np.asarray(data["ids"]).astype(str)
        train = self.split == "train"
        self.models = an.per_attribute_models(self.latents[train], self.labels[train])
        self.reference = pl.healthy_reference(self.latents[train], self.labels[train])
        self.train_latents = self.latents[train]
        self.train_labels = self.labels[train]
        self.train_ids = self.ids[train]

    def scope_models(self, scope: str):
        if scope == "whole":
            return self.models.whole, slice(None)
        k = int(scope.split("_", 1)[1])
        return self.models.subsets[k], attribute_slice(k)


class _Session:
    def __init__(self, sid, session, model_id, analysis_id):
        self.id = sid
        self.session = session
        self.model_id = model_id
        self.analysis_id = analysis_id
        self.created = time.time()
        self.lock = threading.Lock()


# ---------------------------------------------------------------------------
# App factory

def create_app(root, procedures_path=None) -> FastAPI:
    store = ArtifactStore(root)
    registry_path = Path(procedures_path) if procedures_path else store.root / "procedures.json"

    app = FastAPI(title="craniokit service", version="0.1.0")
    load_lock = threading.Lock()
    models: dict = {}
    analyses: dict = {}
    sessions: dict = {}
    session_counter = itertools.count(1)
    sessions_lock = threading.Lock()

    if registry_path.exists():
        procedures = {p.name: p for p in pl.load_procedures(registry_path)}
    else:
        procedures = {p.name: p for p in pl.builtin_procedures()}

    def fail(status: int, exc: Exception):
        raise HTTPException(status, str(exc)) from None

    def get_model(mid: str) -> _LoadedModel:
        with load_lock:
            if mid not in models:
                try:
                    entry = store.model(mid)
                    path = store.resolve(entry["checkpoint"])
                    model, config, meta = load_checkpoint(path)
                except (StoreError, OSError, MeshError, ValueError) as exc:
                    fail(404, exc)
                models[mid] = _LoadedModel(model, config, meta)
            return models[mid]

    def get_analysis(aid: str) -> _LoadedAnalysis:
        with load_lock:
            if aid not in analyses:
                try:
                    entry = store.analysis(aid)
                    analyses[aid] = _LoadedAnalysis(store.resolve(entry["bundle"]))
                except (StoreError, OSError, KeyError, ValueError,
                        an.AnalysisError, pl.PlanningError) as exc:
                    fail(404, exc)
            return analyses[aid]

    def get_session(sid: str) -> _Session:
        with sessions_lock:
            if sid not in sessions:
                raise HTTPException(404, f"unknown session {sid!r}")
            return sessions[sid]

    def session_view(entry: _Session) -> dict:
        s = entry.session
        target = s.target if isinstance(s.target, str) else [float(v) for v in s.target]
        return {"id": entry.id, "patient_id": s.patient_id,
                "model": entry.model_id, "analysis": entry.analysis_id,
                "procedure": s.procedure.name,
                "procedure_attributes": list(s.procedure.attribute_names),
                "target": target, "t": s.t, "stops": _stops_view(s.stops),
                "created": entry.created}

    # -- datasets -------------------------------------------------------------

    @app.get("/datasets")
    def list_datasets():
        out = []
        for did in sorted(store.datasets()):
            entry = store.dataset(did)
            records = load_manifest(store.resolve(entry["manifest"]))
            out.append({"id": did, "topology_hash": entry["topology_hash"],
                        "n_subjects": len(records)})
        return {"datasets": out}

    @app.get("/datasets/{did}/subjects")
    def dataset_subjects(did: str):
        try:
            entry = store.dataset(did)
        except StoreError as exc:
            fail(404, exc)
        records = load_manifest(store.resolve(entry["manifest"]))
        return {"subjects": [
            {"id": r.id, "class": r.class_label, "age": r.age, "sex": r.sex,
             "provenance": r.provenance, "split": r.split,
             "parents": list(r.parents) if r.parents else None}
            for r in records]}

    # -- models ---------------------------------------------------------------

    @app.get("/models")
    def list_models():
        return {"models": [
            {"id": mid, "dataset": entry["dataset"],
             "topology_hash": entry["topology_hash"], "metrics": entry["metrics"]}
            for mid, entry in sorted(store.models().items())]}

    @app.get("/models/{mid}/metrics")
    def model_metrics(mid: str):
        try:
            return {"id": mid, "metrics": store.model(mid)["metrics"]}
        except StoreError as exc:
            fail(404, exc)

    @app.post("/models/{mid}/encode")
    def encode_mesh(mid: str, body: EncodeBody):
        loaded = get_model(mid)
        if body.format not in ("obj", "ply"):
            raise HTTPException(422, f"unsupported mesh format {body.format!r}")
        try:
            raw = base64.b64decode(body.data, validate=True)
        except Exception:
            raise HTTPException(422, "data is not valid base64") from None
        topo = loaded.model.hierarchy.levels[0].topology
        with tempfile.NamedTemporaryFile(suffix=f".{body.format}") as fh:
            fh.write(raw)
            fh.flush()
            try:
                mesh = load_mesh(fh.name, topo)
            except CorrespondenceError as exc:
                fail(409, exc)
            except MeshError as exc:
                fail(422, exc)
        mu = loaded.encode_mean(mesh)
        subsets = {CANONICAL_ATTRIBUTE_NAMES[k]: mu[attribute_slice(k)].tolist()
                   for k in range(len(CANONICAL_ATTRIBUTE_NAMES))}
        label = None
        posteriors = None
        aid = body.analysis
        if aid is None:
            linked = [a for a, e in store.analyses().items() if e["model"] == mid]
            aid = linked[0] if len(linked) == 1 else None
        if aid is not None:
            bundle = get_analysis(aid)
            label, lp = an.classify(bundle.models.whole[1], mu)
            posteriors = {str(c): float(v)
                          for c, v in zip(bundle.models.whole[1].classes, lp)}
        return {"latent": mu.tolist(), "subsets": subsets,
                "label": label, "log_posteriors": posteriors, "analysis": aid}

    # -- analyses -------------------------------------------------------------

    @app.get("/analyses")
    def list_analyses():
        return {"analyses": [
            {"id": aid, "model": entry["model"]}
            for aid, entry in sorted(store.analyses().items())]}

    @app.get("/analyses/{aid}/embedding")
    def analysis_embedding(aid: str, scope: str = "whole", session: str | None = None):
        if scope not in _SCOPES:
            raise HTTPException(422, f"scope must be one of {', '.join(_SCOPES)}")
        bundle = get_analysis(aid)
        (lda, _), cols = bundle.scope_models(scope)
        embedded = an.embed(lda, bundle.train_latents[:, cols])
        ellipses = an.iso_contours(embedded, bundle.train_labels)
        patient = None
        if session is not None:
            entry = get_session(session)
            with entry.lock:
                z_p = entry.session.latent
            patient = an.embed(lda, z_p[cols]).tolist()
        return {
            "scope": scope,
            "classes": [str(c) for c in lda.classes],
            "points": [{"id": sid, "label": str(lbl), "x": float(x), "y": float(y)}
                       for sid, lbl, (x, y) in zip(bundle.train_ids,
                                                   bundle.train_labels, embedded)],
            "ellipses": [{"label": str(e.label), "center": e.center.tolist(),
                          "axes": e.axes.tolist(), "angle": e.angle,
                          "degenerate": e.degenerate} for e in ellipses],
            "patient": patient,
        }

    # -- procedure registry ---------------------------------------------------

    @app.get("/procedures")
    def list_procedures():
        return {"procedures": [
            {"name": p.name, "attributes": list(p.attribute_names)}
            for p in procedures.values()]}

    @app.put("/procedures/{name}")
    def put_procedure(name: str, body: ProcedureBody):
        try:
            proc = pl.Procedure(name, tuple(_NAME_TO_INDEX[a] for a in body.attributes))
        except KeyError as missing:
            raise HTTPException(422, f"unknown attribute name {missing}") from None
        except pl.PlanningError as exc:
            fail(422, exc)
        procedures[name] = proc
        pl.save_procedures(list(procedures.values()), registry_path)
        return {"name": proc.name, "attributes": list(proc.attribute_names)}

    # -- sessions ---------------------------------------------------------------

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionBody):
        get_model(body.model)
        bundle = get_analysis(body.analysis)
        if body.procedure not in procedures:
            raise HTTPException(404, f"unknown procedure {body.procedure!r}")
        try:
            session = pl.PlanningSession(
                patient_id=body.patient_id,
                latent=np.asarray(body.latent, dtype=np.float64),
                procedure=procedures[body.procedure],
                stops=_parse_stops(body.stops),
                target=body.target if isinstance(body.target, str)
                else np.asarray(body.target, dtype=np.float64),
                t=body.t)
            pl.resolve_target(session, bundle.reference)  # fail early on geometry
        except pl.PlanningError as exc:
            fail(422, exc)
        with sessions_lock:
            sid = f"s{next(session_counter):04d}"
            entry = _Session(sid, session, body.model, body.analysis)
            sessions[sid] = entry
        return session_view(entry)

    @app.get("/sessions")
    def list_sessions():
        with sessions_lock:
            entries = sorted(sessions.values(), key=lambda e: e.id)
        return {"sessions": [session_view(e) for e in entries]}

    @app.get("/sessions/{sid}")
    def show_session(sid: str):
        entry = get_session(sid)
        with entry.lock:
            return session_view(entry)

    @app.patch("/sessions/{sid}")
    def patch_session(sid: str, body: SessionPatch):
        entry = get_session(sid)
        with entry.lock:
            current = entry.session
            try:
                updated = current.with_controls(
                    t=body.t,
                    stops=None if body.stops is None else _parse_stops(body.stops),
                    target=None if body.target is None
                    else (body.target if isinstance(body.target, str)
                          else np.asarray(body.target, dtype=np.float64)))
            except pl.PlanningError as exc:
                fail(422, exc)
            entry.session = updated
            return session_view(entry)

    @app.get("/sessions/{sid}/trajectory")
    def session_trajectory(sid: str, steps: int = 5, mesh_format: str = "glb"):
        if not 1 <= steps <= 50:
            raise HTTPException(422, "steps must lie in [1, 50]")
        if mesh_format not in ("glb", "obj", "none"):
            raise HTTPException(422, f"unsupported mesh format {mesh_format!r}")
        entry = get_session(sid)
        with entry.lock:
            session = entry.session
        loaded = get_model(entry.model_id)
        bundle = get_analysis(entry.analysis_id)
        try:
            zs = pl.trajectory_latents(session, bundle.reference, steps)
        except pl.PlanningError as exc:
            fail(422, exc)
        positions = loaded.generate_many(zs)
        topo = loaded.model.hierarchy.levels[0].topology
        ts = np.linspace(0.0, 1.0, steps) if steps > 1 else np.zeros(1)
        base = positions[0]
        out_steps = []
        for t, z, pos in zip(ts, zs, positions):
            disp = np.linalg.norm(pos - base, axis=1)
            embedded = {}
            for scope in _SCOPES:
                (lda, _), cols = bundle.scope_models(scope)
                embedded[scope] = an.embed(lda, z[cols]).tolist()
            step = {"t": float(t), "latent": z.tolist(),
                    "embedded": embedded, "displacement": disp.tolist()}
            if mesh_format == "glb":
                step["mesh_glb"] = base64.b64encode(
                    mesh_to_glb(pos, topo.faces, disp)).decode()
            elif mesh_format == "obj":
                step["mesh_obj"] = _obj_text(pos, topo.faces)
            out_steps.append(step)
        return {"session": sid, "steps": out_steps}

    @app.get("/sessions/{sid}/ranking")
    def session_ranking(sid: str):
        entry = get_session(sid)
        with entry.lock:
            session = entry.session
        bundle = get_analysis(entry.analysis_id)
        try:
            rows = pl.rank_procedures(list(procedures.values()), session.latent,
                                      bundle.reference)
        except pl.PlanningError as exc:
            fail(422, exc)
        return {"session": sid, "rows": [
            {"procedure": r.procedure.name,
             "attributes": list(r.procedure.attribute_names),
             "d_mu": r.d_mu, "d_1sigma": r.d_1sigma,
             "d_2sigma": r.d_2sigma, "d_3sigma": r.d_3sigma}
            for r in rows]}

    return app


def _obj_text(positions, faces) -> str:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in positions]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
    return "\n".join(lines) + "\n"
