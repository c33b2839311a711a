"""Config-driven orchestration shared by the CLI subcommands."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _accel
from . import discretization as disc
from . import export, imaging, rk, solver, svm, synthetic
from . import material as mat
from .errors import MissingFileError, OutputError

log = logging.getLogger(__name__)


def build_image(cfg):
    c = cfg["image"]
    origin = (c["origin_x"], c["origin_y"])
    if c["path"] is not None:
        path = cfg.image_path
        if not path.is_file():
            raise MissingFileError(f"image not found: {path}")
        return imaging.load_image(path, c["pixel_size"], origin)
    kind = c["synthetic"]
    if kind == "circle":
        img, _, _ = synthetic.circle_image(c["width"], c["radius_px"], pixel_size=c["pixel_size"])
    elif kind == "checkerboard":
        img = synthetic.checkerboard_image(max(1, c["width"] // c["cell_px"]), c["cell_px"], c["pixel_size"])
    else:
        img = synthetic.blank_image(c["width"], c["height"], c["pixel_size"])
    return imaging.ImageGrid(img.intensities, img.pixel_size, origin)


@dataclass
class Segmentation:
    model: svm.SvmModel
    labels: imaging.PhaseLabels
    sigma: float
    C: float
    cv_loss: float
    accuracy: float


def segment(cfg, img, seed=None, threads=None):
    """Otsu labels, then an RBF SVM with fixed or cross-validated hyperparameters."""
    c = cfg["svm"]
    seed = cfg["run"]["seed"] if seed is None else seed
    threads = cfg["run"]["threads"] if threads is None else threads
    labels = imaging.label_pixels(img, imaging.otsu_threshold(img.histogram()))
    pts, y = imaging.training_data(img, labels)
    if c["sigma"] is not None:
        sigma, C, cv_loss = c["sigma"], c["C"], float("nan")
    else:
        s_grid, c_grid = svm.default_grids(img.pixel_size)
        s_grid = c["sigma_grid"] if c["sigma_grid"] is not None else s_grid
        c_grid = c["c_grid"] if c["c_grid"] is not None else c_grid
        tuned = svm.tune_hyperparameters(pts, y, s_grid, c_grid, folds=c["folds"], seed=seed,
                                         tol=c["cv_tol"], threads=threads)
        sigma, C, cv_loss = tuned.sigma, tuned.C, tuned.cv_loss
    model = svm.train_svm(pts, y, sigma, C, tol=c["tol"])
    acc = svm.training_accuracy(model, pts, y)
    return Segmentation(model, labels, float(sigma), float(C), float(cv_loss), float(acc))


def build_field(cfg, img, seed=None, threads=None):
    """Score field per ``model.source``; returns ``(field, Segmentation or None)``."""
    m = cfg["model"]
    src = m["source"]
    if src == "circle":
        return svm.CircleScore((m["center_x"], m["center_y"]), m["radius"]), None
    if src == "constant":
        return svm.ConstantScore(1.0), None
    if src == "file":
        path = cfg.resolve(m["svm_file"])
        if not path.is_file():
            raise MissingFileError(f"SVM model file not found: {path}")
        return svm.ScoreField(svm.load_model(path)), None
    seg = segment(cfg, img, seed, threads)
    return svm.ScoreField(seg.model), seg


def build_discretization(cfg, img, field):
    c = cfg["discretization"]
    voids = tuple(disc.Void((v[0], v[1]), v[2]) for v in cfg["geometry"]["voids"])
    nodes = disc.generate_nodes(img, field, refine=c["refine"], support_factor=c["support_factor"], voids=voids)
    if cfg["model"]["source"] != "constant":
        nodes = disc.generate_interface_nodes(field, nodes)
    quad = disc.build_quadrature(img.extent, nodes.spacing, c["quadrature_order"],
                                 None if cfg["model"]["source"] == "constant" else field, voids=voids)
    return nodes, quad


def build_materials(cfg):
    m = cfg["material"]
    matrix = mat.PhaseProperties.from_gpa(m["E_matrix"], m["nu_matrix"], m["gc_matrix"])
    inclusion = None
    if m["E_inclusion"] is not None:
        inclusion = mat.PhaseProperties.from_gpa(m["E_inclusion"], m["nu_inclusion"], m["gc_inclusion"])
    L = cfg["lengths"]
    lengths = mat.RegularizationLengths(L["l_d"], L["l_beta"], L["h"], L["kappa"])
    z = cfg["czm"]
    czm = None
    if z["enabled"] and cfg["model"]["source"] != "constant":
        czm = mat.CzmParameters(z["gc"], z["tn_max"], z["tt_max"], z["mode_one"])
    return matrix, inclusion, lengths, czm


def build_program(cfg):
    ld = cfg["load"]
    cons = [solver.Constraint(side, comp, scale=1.0) for side, comp in ld["driven"]]
    cons += [solver.Constraint(side, comp) for side, comp in ld["fixed"]]
    cons += [solver.Constraint((p[0], p[1]), int(p[2])) for p in ld["pins"]]
    if ld["u_values"] is not None:
        return solver.LoadProgram(ld["u_values"], tuple(cons))
    return solver.LoadProgram.monotonic(ld["u_max"], ld["n_steps"], cons)


def build_model(cfg, img, field):
    nodes, quad = build_discretization(cfg, img, field)
    matrix, inclusion, lengths, czm = build_materials(cfg)
    c = cfg["discretization"]
    bl = cfg["blend"]
    blending = (bl["box"], bl["width"], bl["volume_fraction"]) if bl["enabled"] else None
    E_max = max(matrix.E, inclusion.E if inclusion is not None else 0.0)
    return solver.build_model(
        nodes, quad, field, matrix, inclusion, lengths=lengths, czm=czm,
        spec=rk.BasisSpec(c["basis_order"], 2, c["kernel"]), use_im=c["interface_modified"],
        c=c["c_factor"] * nodes.spacing, xi_measure=c["xi_measure"],
        penalty=cfg["solver"]["penalty_factor"] * E_max / nodes.spacing, blending=blending,
    )


@dataclass
class SimulationOutcome:
    results: list
    state: solver.SimulationState
    curve_path: Path
    fields_path: Path
    completed: bool


def simulate(cfg, out_dir, snapshot_every=None, seed=None, threads=None):
    """Full pipeline; writes curve, final fields and snapshots under ``out_dir``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc.strerror or exc}") from exc
    threads = cfg["run"]["threads"] if threads is None else threads
    _accel.set_threads(threads)
    every = cfg["output"]["snapshot_every"] if snapshot_every is None else snapshot_every
    img = build_image(cfg)
    field, seg = build_field(cfg, img, seed, threads)
    if seg is not None:
        svm.save_model(out_dir / "svm_model.txt", seg.model)
    model = build_model(cfg, img, field)
    program = build_program(cfg)
    s = cfg["solver"]
    curve_path = out_dir / "curve.csv"

    def on_step(res, state):
        log.info("step %d u_bar=%g converged=%s iterations=%d reaction=%.6g max_d=%.4f", res.step,
                 res.u_bar, res.converged, res.iterations, res.reaction, res.max_d)
        if res.converged and every and state.step % every == 0:
            export.save_snapshot(out_dir / "snapshots" / f"step_{state.step:04d}.npz", model, state)

    results, state = solver.run_simulation(
        model, program, method=s["method"], on_step=on_step, max_iter=s["max_iterations"],
        tol_d=s["tol_damage"], tol_u=s["tol_displacement"], anderson=s["anderson_depth"],
    )
    export.write_curve_csv(curve_path, results)
    fields = export.field_arrays(model, state)
    fields_path = out_dir / "fields.csv"
    export.write_fields_csv(fields_path, fields)
    if cfg["output"]["vtk"]:
        export.write_vtk(out_dir / "fields.vtk", fields)
    completed = bool(results) and all(r.converged for r in results) and len(results) == len(program.u_bar)
    return SimulationOutcome(results, state, curve_path, fields_path, completed)


def segmentation_report(img, seg, nodes):
    lines = [
        f"image: {img.width} x {img.height} pixels, pixel size {img.pixel_size:g} mm",
        f"otsu threshold: {seg.labels.threshold}",
        f"matrix pixels: {seg.labels.n_matrix}",
        f"inclusion pixels: {seg.labels.n_inclusion}",
        f"sigma: {seg.sigma:.6g}",
        f"C: {seg.C:.6g}",
        f"cv loss: {seg.cv_loss:.6g}",
        f"training accuracy: {seg.accuracy:.6f}",
        f"support vectors: {seg.model.n_support}",
        f"nodes: {nodes.n_nodes}",
        f"interface nodes: {nodes.n_interface}",
    ]
    return "\n".join(lines) + "\n"


def run_segment(cfg, out_dir, seed=None, threads=None):
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc.strerror or exc}") from exc
    img = build_image(cfg)
    seg = segment(cfg, img, seed, threads)
    field = svm.ScoreField(seg.model)
    c = cfg["discretization"]
    nodes = disc.generate_nodes(img, field, refine=c["refine"], support_factor=c["support_factor"])
    nodes = disc.generate_interface_nodes(field, nodes)
    try:
        svm.save_model(out_dir / "svm_model.txt", seg.model)
        imaging.write_labeled_csv(out_dir / "labels.csv", img, seg.labels)
        nodes.to_csv(out_dir / "nodes.csv")
        report = segmentation_report(img, seg, nodes)
        (out_dir / "segmentation_report.txt").write_text(report)
    except OSError as exc:
        raise OutputError(f"cannot write segmentation output in {out_dir}: {exc.strerror or exc}") from exc
    return seg, nodes, report


def curve_array(results):
    return np.array([[r.step, r.u_bar, r.reaction, r.max_d, r.dissipated, r.iterations]
                     for r in results if r.converged])
