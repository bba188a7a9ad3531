"""Command line driver for the cohort-to-planning pipeline.

Subcommands cover cohort synthesis, splitting, spectral augmentation and
spectra export, training, evaluation, discriminant analysis, procedure
planning, and serving the HTTP API. Each command writes only under its
--out directory, registers produced artifacts in the store index there,
prints a one-line JSON summary to stdout, and on failure prints a single
machine-readable JSON error line to stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from . import diffcore as dc
from . import planning as pl
from . import sdvae
from .cohort import (CohortError, apply_split, class_counts, load_manifest,
                     plan_augmentation, save_manifest, stratified_split,
                     SubjectRecord)
from .figures import (confusion_figure, disentanglement_figure,
                      embedding_figure, training_figure)
from .hierarchy import HierarchyError, build_hierarchy
from .mesh import (CorrespondedMesh, MeshError, build_topology, load_mesh,
                   load_segmentation, read_mesh_file, save_mesh,
                   save_segmentation)
from .spectral import (EigensolverError, build_eigenbasis, export_spectra,
                       sample_weights, save_basis, spectral_augment)
from .store import ArtifactStore, StoreError, content_id
from .synthetic import (CLASS_LABELS, build_template, default_factor_spec,
                        generate_synthetic_cohort, save_factors)

_ERRORS = (MeshError, CohortError, EigensolverError, HierarchyError,
           dc.GradientError, sdvae.ModelError, sdvae.TrainingError,
           an.AnalysisError, pl.PlanningError, StoreError, OSError, ValueError)


# ---------------------------------------------------------------------------
# Shared loading helpers

def _load_template(template_path, labels_path) -> CorrespondedMesh:
    positions, faces = read_mesh_file(template_path)
    names, masks = load_segmentation(labels_path, len(positions))
    topo = build_topology(faces, len(positions), names, masks)
    return CorrespondedMesh(topo, positions)


def _load_meshes(records, manifest_path, topology):
    root = Path(manifest_path).parent
    return [load_mesh(root / r.mesh_path, topology) for r in records]


def _split_records(records, split):
    out = [r for r in records if r.split == split]
    if not out:
        raise CohortError(f"manifest has no {split!r} subjects; run split first")
    return out


def _require(path, what) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _g(value: float) -> str:
    return f"{float(value):.17g}"


# ---------------------------------------------------------------------------
# Commands

def cmd_synth(args) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    counts = dict(zip(CLASS_LABELS, args.counts))
    spec = default_factor_spec(discriminative_region=args.region,
                               levels=tuple(args.levels),
                               subject_noise=args.noise)
    template = build_template(subdivisions=args.subdivisions)
    cohort = generate_synthetic_cohort(spec, counts, out, seed=args.seed,
                                       template=template)
    topo = template.topology
    save_mesh(template, out / "template.ply")
    labels = np.full(topo.vertex_count, -1, dtype=np.int64)
    for k, mask in enumerate(topo.attribute_masks):
        labels[mask] = k
    save_segmentation(out / "template_labels.csv", topo.attribute_names, labels)
    save_manifest(cohort.records, out / "manifest.csv")
    save_factors(cohort, out / "factors.csv")
    store = ArtifactStore(out)
    did = store.add_dataset(out / "manifest.csv", topo.topology_hash,
                            template_path=out / "template.ply",
                            labels_path=out / "template_labels.csv")
    return {"dataset": did, "subjects": len(cohort.records),
            "vertices": topo.vertex_count,
            "counts": class_counts(cohort.records)}


def cmd_split(args) -> dict:
    manifest = _require(args.manifest or Path(args.out) / "manifest.csv", "manifest")
    records = load_manifest(manifest)
    assignment = stratified_split(records, ratios=tuple(args.ratios), seed=args.seed)
    records = apply_split(records, assignment)
    save_manifest(records, manifest)
    template = _require(args.template or Path(args.out) / "template.ply", "template")
    labels = _require(args.labels or Path(args.out) / "template_labels.csv",
                      "segmentation")
    topo = _load_template(template, labels).topology
    store = ArtifactStore(args.out)
    did = store.add_dataset(manifest, topo.topology_hash,
                            template_path=template, labels_path=labels)
    return {"dataset": did,
            "train": class_counts(records, "train"),
            "val": class_counts(records, "val"),
            "test": class_counts(records, "test")}


def cmd_augment(args) -> dict:
    out = Path(args.out)
    manifest = _require(args.manifest or out / "manifest.csv", "manifest")
    template = _require(args.template or out / "template.ply", "template")
    labels = _require(args.labels or out / "template_labels.csv", "segmentation")
    tpl = _load_template(template, labels)
    records = load_manifest(manifest)
    train = _split_records(records, "train")
    plan = plan_augmentation(train, args.target, seed=args.seed)

    basis = build_eigenbasis(tpl.topology, k=args.basis_k, seed=args.seed)
    save_basis(basis, out / "eigenbasis.npz")
    by_id = {r.id: r for r in records}
    mesh_root = manifest.parent
    (mesh_root / "meshes").mkdir(exist_ok=True)
    cache: dict = {}

    def cohort_mesh(sid):
        if sid not in cache:
            cache[sid] = load_mesh(mesh_root / by_id[sid].mesh_path, tpl.topology)
        return cache[sid]

    new_records = []
    for i, (p1, p2, pair_seed) in enumerate(plan):
        weights = sample_weights(pair_seed, k=basis.k, n_active=args.components)
        aug = spectral_augment(cohort_mesh(p1), cohort_mesh(p2), weights, basis)
        r1, r2 = by_id[p1], by_id[p2]
        sid = f"aug_{i:05d}"
        rel = f"meshes/{sid}.ply"
        save_mesh(aug, mesh_root / rel)
        new_records.append(SubjectRecord(
            id=sid, class_label=r1.class_label, age=(r1.age + r2.age) / 2.0,
            sex=r1.sex, mesh_path=rel, provenance="augmented",
            parents=(p1, p2), split="train"))
    records = records + new_records
    save_manifest(records, manifest)
    store = ArtifactStore(args.out)
    did = store.add_dataset(manifest, tpl.topology.topology_hash,
                            template_path=template, labels_path=labels)
    return {"dataset": did, "augmented": len(new_records),
            "train": class_counts(records, "train")}


def cmd_spectra(args) -> dict:
    out = Path(args.out)
    manifest = _require(args.manifest or out / "manifest.csv", "manifest")
    template = _require(args.template or out / "template.ply", "template")
    labels = _require(args.labels or out / "template_labels.csv", "segmentation")
    tpl = _load_template(template, labels)
    records = load_manifest(manifest)
    basis = build_eigenbasis(tpl.topology, k=args.basis_k, seed=args.seed)
    save_basis(basis, out / "eigenbasis.npz")
    meshes = _load_meshes(records, manifest, tpl.topology)
    rows = export_spectra(meshes, records, basis, args.components,
                          out / "spectra.csv")
    return {"rows": rows, "subjects": len(records), "components":
            min(args.components, basis.k)}


def cmd_train(args) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _require(args.manifest or out / "manifest.csv", "manifest")
    template = _require(args.template or out / "template.ply", "template")
    labels = _require(args.labels or out / "template_labels.csv", "segmentation")
    tpl = _load_template(template, labels)
    records = load_manifest(manifest)
    train_records = _split_records(records, "train")
    if args.exclude_augmented:
        train_records = [r for r in train_records if r.provenance != "augmented"]
    val_records = _split_records(records, "val")

    hierarchy = build_hierarchy(tpl, levels=args.levels, factor=args.factor,
                                spiral_length=args.spiral_length)
    train_meshes = _load_meshes(train_records, manifest, tpl.topology)
    val_meshes = _load_meshes(val_records, manifest, tpl.topology)
    config = sdvae.TrainingConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        alpha=args.alpha, beta=args.beta, kappa=args.kappa,
        eta1=args.eta1, eta2=args.eta2, seed=args.seed)

    report_every = max(1, config.epochs // 10)

    def progress(s):
        if s.epoch % report_every == 0 or s.epoch == config.epochs - 1:
            print(f"epoch {s.epoch}: recon {s.reconstruction:.4f} "
                  f"val {s.val_reconstruction:.4f}", file=sys.stderr)

    model, stats, rng = sdvae.train(train_meshes, val_meshes, config, hierarchy,
                                    progress=progress if not args.quiet else None)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.npz"
    sdvae.save_checkpoint(ckpt, model, config, rng)
    sdvae.save_training_log(stats, out / "training_log.csv")
    training_figure(out / "training_curves.svg", stats)
    store = ArtifactStore(args.out)
    did = store.add_dataset(manifest, tpl.topology.topology_hash,
                            template_path=template, labels_path=labels)
    mid = store.add_model(ckpt, did, tpl.topology.topology_hash)
    final = stats[-1]
    return {"model": mid, "checkpoint": str(ckpt), "epochs": config.epochs,
            "train_meshes": len(train_meshes),
            "final_val_reconstruction": final.val_reconstruction}


def _load_model(args, out):
    ckpt = _require(args.checkpoint or out / "checkpoint.npz", "checkpoint")
    model, config, meta = sdvae.load_checkpoint(ckpt)
    return ckpt, model, config, meta


def cmd_eval(args) -> dict:
    out = Path(args.out)
    manifest = _require(args.manifest or out / "manifest.csv", "manifest")
    ckpt, model, config, meta = _load_model(args, out)
    topo = model.hierarchy.levels[0].topology
    records = load_manifest(manifest)
    test_meshes = _load_meshes(_split_records(records, "test"), manifest, topo)

    rec_mean, rec_std = sdvae.metric_reconstruction_error(
        test_meshes, model.reconstruct)
    diversity = sdvae.metric_diversity(model.generate, n=args.diversity_n,
                                       seed=args.seed)
    matrix = an.disentanglement_matrix(model.generate_many, topo.attribute_masks)
    alignment = an.argmax_alignment(matrix)
    _write_csv(out / "disentanglement.csv",
               ["variable"] + list(topo.attribute_names),
               [[i] + [_g(v) for v in row] for i, row in enumerate(matrix)])
    disentanglement_figure(out / "disentanglement.svg", matrix,
                           topo.attribute_names)
    metrics = {"reconstruction_mm": rec_mean, "reconstruction_std_mm": rec_std,
               "diversity_mm": diversity, "disentanglement_alignment": alignment,
               "test_meshes": len(test_meshes)}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2,
                                                 sort_keys=True) + "\n")
    store = ArtifactStore(args.out)
    template = args.template or out / "template.ply"
    labels = args.labels or out / "template_labels.csv"
    did = store.add_dataset(manifest, topo.topology_hash,
                            template_path=template, labels_path=labels)
    mid = store.add_model(ckpt, did, topo.topology_hash, metrics)
    return {"model": mid, **metrics}


def cmd_analyze(args) -> dict:
    out = Path(args.out)
    manifest = _require(args.manifest or out / "manifest.csv", "manifest")
    ckpt, model, config, meta = _load_model(args, out)
    topo = model.hierarchy.levels[0].topology
    records = [r for r in load_manifest(manifest) if r.split is not None]
    if not records:
        raise CohortError("manifest has no split assignments; run split first")
    meshes = _load_meshes(records, manifest, topo)
    latents = model.encode_many(meshes)
    ids = np.array([r.id for r in records])
    labels = np.array([r.class_label for r in records])
    split = np.array([r.split for r in records])

    bundle_path = out / "analysis.npz"
    np.savez(bundle_path, latents=latents.astype("<f8"), ids=ids,
             labels=labels, split=split)

    train_mask = split == "train"
    test_mask = split == "test"
    models = an.per_attribute_models(latents[train_mask], labels[train_mask],
                                     tol=args.tol, shrinkage=args.shrinkage)
    lda, qda = models.whole
    result = an.confusion_matrix(qda, latents[test_mask], labels[test_mask])
    _write_csv(out / "confusion.csv",
               ["true"] + [str(c) for c in result.classes],
               [[str(c)] + list(map(int, row))
                for c, row in zip(result.classes, result.counts)])
    confusion_figure(out / "confusion.svg", result)

    scope_rows = [["whole", "", _g(result.accuracy), _g(result.macro_f1)]]
    for k, (_, sub_qda) in enumerate(models.subsets):
        sub = an.confusion_matrix(sub_qda, latents[test_mask][:, sdvae.attribute_slice(k)],
                                  labels[test_mask])
        scope_rows.append([f"attribute_{k}", topo.attribute_names[k],
                           _g(sub.accuracy), _g(sub.macro_f1)])
    _write_csv(out / "attribute_accuracy.csv",
               ["scope", "region", "accuracy", "macro_f1"], scope_rows)

    embedded = an.embed(lda, latents)
    _write_csv(out / "embedding.csv", ["id", "class", "split", "x", "y"],
               [[i, c, s, _g(x), _g(y)]
                for i, c, s, (x, y) in zip(ids, labels, split, embedded)])
    contours = an.iso_contours(embedded[train_mask], labels[train_mask])
    embedding_figure(out / "embedding.svg", embedded[train_mask],
                     labels[train_mask], contours, title="whole latent")

    summary = {"accuracy": result.accuracy, "macro_f1": result.macro_f1,
               "macro_precision": result.macro_precision,
               "macro_recall": result.macro_recall,
               "per_class_f1": {str(c): f for c, f in zip(result.classes, result.f1)},
               "counts": result.counts.tolist()}
    (out / "classification.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")

    store = ArtifactStore(args.out)
    template = args.template or out / "template.ply"
    labels_path = args.labels or out / "template_labels.csv"
    did = store.add_dataset(manifest, topo.topology_hash,
                            template_path=template, labels_path=labels_path)
    mid = store.add_model(ckpt, did, topo.topology_hash)
    aid = store.add_analysis(bundle_path, mid)
    return {"analysis": aid, "model": mid,
            "accuracy": result.accuracy, "macro_f1": result.macro_f1}


def cmd_plan(args) -> dict:
    out = Path(args.out)
    manifest = _require(args.manifest or out / "manifest.csv", "manifest")
    ckpt, model, config, meta = _load_model(args, out)
    topo = model.hierarchy.levels[0].topology
    bundle = _require(args.analysis or out / "analysis.npz", "analysis bundle")
    with np.load(bundle, allow_pickle=False) as data:
        latents = np.asarray(data["latents"], dtype=np.float64)
        labels = np.asarray(data["labels"]).astype(str)
        split = np.asarray(data["split"]).astype(str)
        ids = np.asarray(data["ids"]).astype(str)
    train_mask = split == "train"
    ref = pl.healthy_reference(latents[train_mask], labels[train_mask])
    models = an.per_attribute_models(latents[train_mask], labels[train_mask])

    if args.patient_mesh:
        patient_id = Path(args.patient_mesh).stem
        mesh = load_mesh(args.patient_mesh, topo)
        z_p, _ = model.encode(mesh)
    elif args.patient:
        patient_id = args.patient
        where = np.flatnonzero(ids == patient_id)
        if where.size == 0:
            raise pl.PlanningError(f"subject {patient_id!r} not in analysis bundle")
        z_p = latents[where[0]]
    else:
        raise pl.PlanningError("pass --patient ID or --patient-mesh PATH")

    registry = {p.name: p for p in pl.builtin_procedures()}
    if args.procedures_file:
        registry = {p.name: p for p in pl.load_procedures(args.procedures_file)}
    plan_dir = out / "plan"
    plan_dir.mkdir(parents=True, exist_ok=True)

    ranking = pl.rank_procedures(list(registry.values()), z_p, ref)
    _write_csv(plan_dir / "ranking.csv",
               ["procedure", "attributes", "d_mu", "d_1sigma", "d_2sigma", "d_3sigma"],
               [[r.procedure.name, "|".join(r.procedure.attribute_names)]
                + [_g(v) for v in r.distances()] for r in ranking])

    if args.procedure not in registry:
        raise pl.PlanningError(f"unknown procedure {args.procedure!r}")
    stops = {}
    for item in args.stop or []:
        name, _, frac = item.partition("=")
        names = {n: i for i, n in enumerate(topo.attribute_names)}
        if name not in names:
            raise pl.PlanningError(f"unknown attribute {name!r} in --stop")
        stops[names[name]] = float(frac)
    session = pl.PlanningSession(patient_id=patient_id, latent=z_p,
                                 procedure=registry[args.procedure],
                                 stops=stops, target=args.target)
    steps = pl.interpolate(session, ref, args.steps, model)

    _write_csv(plan_dir / "trajectory_latents.csv",
               ["step", "t"] + [f"z{i:02d}" for i in range(sdvae.LATENT_DIM)],
               [[i, _g(s.t)] + [_g(v) for v in s.latent]
                for i, s in enumerate(steps)])
    for i, s in enumerate(steps):
        save_mesh(s.mesh, plan_dir / f"step_{i:02d}.ply")
        Path(plan_dir / f"step_{i:02d}_displacement.txt").write_text(
            "\n".join(_g(v) for v in s.displacement.magnitudes) + "\n")

    lda = models.whole[0]
    trajectory_2d = an.embed(lda, np.stack([s.latent for s in steps]))
    contours = an.iso_contours(an.embed(lda, latents[train_mask]),
                               labels[train_mask])
    embedding_figure(plan_dir / "trajectory.svg",
                     an.embed(lda, latents[train_mask]), labels[train_mask],
                     contours, patient=an.embed(lda, z_p),
                     trajectory=trajectory_2d,
                     title=f"{args.procedure} ({patient_id})")
    return {"patient": patient_id, "procedure": args.procedure,
            "steps": args.steps,
            "best_procedure": ranking[0].procedure.name,
            "best_d_mu": ranking[0].d_mu,
            "final_displacement_mean":
                float(np.mean(steps[-1].displacement.magnitudes))}


def cmd_serve(args) -> dict:
    import uvicorn

    from .service import create_app

    root = args.root or os.environ.get("CRANIOKIT_ROOT", ".")
    port = args.port if args.port is not None else int(
        os.environ.get("CRANIOKIT_PORT", "8000"))
    host = args.host or os.environ.get("CRANIOKIT_HOST", "127.0.0.1")
    app = create_app(root)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return {"root": str(root), "port": port}


# ---------------------------------------------------------------------------
# Parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="craniokit",
        description="Mesh VAE toolkit: synthesize, augment, train, analyze, plan, serve.")
    parser.add_argument("--config", help="JSON config supplying per-command defaults")
    sub = parser.add_subparsers(dest="command")
    parsers = {}

    def command(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--out", required=True, help="output/artifact directory")
        p.add_argument("--seed", type=int, default=0)
        # SUPPRESS keeps a root-level --config visible when the subcommand
        # flag is absent (a subparser default would overwrite it)
        p.add_argument("--config", default=argparse.SUPPRESS,
                       help="JSON config supplying per-command defaults")
        parsers[name] = p
        return p

    p = command("synth", cmd_synth, "generate a synthetic labeled cohort")
    p.add_argument("--counts", type=int, nargs=4, default=[40, 20, 25, 10],
                   metavar=("HEALTHY", "APERT", "CROUZON", "MUENKE"))
    p.add_argument("--subdivisions", type=int, default=4)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--region", default="orbits",
                   help="region whose bump amplitude separates the classes")
    p.add_argument("--levels", type=float, nargs=4, default=[0.0, 14.0, -11.0, 6.5],
                   help="per-class bump amplitude in the discriminative region")

    p = command("split", cmd_split, "assign stratified train/val/test splits")
    p.add_argument("--manifest")
    p.add_argument("--template")
    p.add_argument("--labels")
    p.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1],
                   metavar=("TRAIN", "VAL", "TEST"))

    p = command("augment", cmd_augment, "balance training classes by spectral interpolation")
    p.add_argument("--manifest")
    p.add_argument("--template")
    p.add_argument("--labels")
    p.add_argument("--target", type=int, required=True,
                   help="training subjects per class after augmentation")
    p.add_argument("--basis-k", type=int, default=30)
    p.add_argument("--components", type=int, default=30)

    p = command("spectra", cmd_spectra, "export per-subject spectral components")
    p.add_argument("--manifest")
    p.add_argument("--template")
    p.add_argument("--labels")
    p.add_argument("--basis-k", type=int, default=100)
    p.add_argument("--components", type=int, default=30)

    p = command("train", cmd_train, "train the swap-disentangled mesh VAE")
    p.add_argument("--manifest")
    p.add_argument("--template")
    p.add_argument("--labels")
    p.add_argument("--checkpoint", help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=600)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=1e-4)
    p.add_argument("--kappa", type=float, default=0.5)
    p.add_argument("--eta1", type=float, default=0.5)
    p.add_argument("--eta2", type=float, default=0.5)
    p.add_argument("--levels", type=int, default=4, help="pooling levels")
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--spiral-length", type=int, default=9)
    p.add_argument("--exclude-augmented", action="store_true",
                   help="train on real/synthetic subjects only")
    p.add_argument("--quiet", action="store_true")

    p = command("eval", cmd_eval, "reconstruction, diversity, and traversal metrics")
    p.add_argument("--manifest")
    p.add_argument("--template")
    p.add_argument("--labels")
    p.add_argument("--checkpoint")
    p.add_argument("--diversity-n", type=int, default=100)

    p = command("analyze", cmd_analyze, "fit LDA/QDA, confusion matrices, embeddings")
    p.add_argument("--manifest")
    p.add_argument("--template")
    p.add_argument("--labels")
    p.add_argument("--checkpoint")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--shrinkage", type=float, default=0.0,
                   help="blend class covariances toward isotropic (0..1)")

    p = command("plan", cmd_plan, "rank procedures and export a trajectory")
    p.add_argument("--manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--analysis", help="analysis bundle npz")
    p.add_argument("--patient", help="subject id from the analysis bundle")
    p.add_argument("--patient-mesh", help="mesh file to encode as the patient")
    p.add_argument("--procedure", default="Le Fort II")
    p.add_argument("--target", default="mu",
                   choices=list(pl.TARGET_KEYS))
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--stop", action="append", metavar="REGION=FRACTION",
                   help="per-attribute stop fraction, repeatable")
    p.add_argument("--procedures-file", help="procedure registry JSON")

    p = sub.add_parser("serve", help="serve the HTTP API over an artifact store")
    p.set_defaults(fn=cmd_serve)
    p.add_argument("--root", help="artifact store root (env CRANIOKIT_ROOT)")
    p.add_argument("--host", help="bind host (env CRANIOKIT_HOST)")
    p.add_argument("--port", type=int, help="bind port (env CRANIOKIT_PORT)")
    parsers["serve"] = p

    return parser, parsers


def main(argv=None) -> int:
    parser, parsers = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "fn", None) is None:
        parser.print_help(sys.stderr)
        return 2
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            print(json.dumps({"command": args.command, "error":
                              f"unreadable config: {exc}"}), file=sys.stderr)
            return 1
        section = cfg.get(args.command, {})
        p = parsers[args.command]
        for key, value in section.items():
            dest = key.replace("-", "_")
            if not hasattr(args, dest):
                print(json.dumps({"command": args.command, "error":
                                  f"unknown config key {key!r}"}), file=sys.stderr)
                return 1
            if getattr(args, dest) == p.get_default(dest):
                setattr(args, dest, value)
    try:
        payload = args.fn(args)
    except _ERRORS as exc:
        print(json.dumps({"command": args.command, "error": str(exc),
                          "type": type(exc).__name__}), file=sys.stderr)
        return 1
    print(json.dumps(payload, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
