"""Run configuration: a sectioned ``key = value`` file (INI grammar).

Every key is declared in :data:`SCHEMA` with its type and default; unknown
sections or keys, type mismatches and out-of-range values raise
:class:`~imrkpm.errors.ConfigError` carrying the file and line number.
Lists are comma separated; point lists are separated by semicolons.
Relative paths are resolved against the directory of the config file.
Moduli are given in GPa and stored in MPa.
"""

import configparser
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, MissingFileError

REQUIRED = object()


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _point_list(text):
    """``x,y,r; x,y,r`` -> tuple of float tuples."""
    return tuple(_float_list(chunk) for chunk in text.split(";") if chunk.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text):
    return text.strip()


POS = "positive"
NONNEG = "nonnegative"
UNIT = "in [0, 1]"
POISSON = "in [0, 0.5)"

# section -> key -> (parser, default, constraint)
SCHEMA = {
    "image": {
        "path": (_str, None, None),
        "synthetic": (_str, None, ("circle", "checkerboard", "blank")),
        "width": (int, 60, POS),
        "height": (int, 60, POS),
        "radius_px": (float, 15.0, POS),
        "cell_px": (int, 8, POS),
        "pixel_size": (float, 0.008, POS),
        "origin_x": (float, 0.0, None),
        "origin_y": (float, 0.0, None),
    },
    "model": {
        "source": (_str, "svm", ("svm", "file", "circle", "constant")),
        "svm_file": (_str, None, None),
        "center_x": (float, None, None),
        "center_y": (float, None, None),
        "radius": (float, None, POS),
    },
    "svm": {
        "sigma": (float, None, POS),
        "C": (float, None, POS),
        "sigma_grid": (_float_list, None, POS),
        "c_grid": (_float_list, None, POS),
        "folds": (int, 5, POS),
        "tol": (float, 1e-6, POS),
        "cv_tol": (float, 1e-3, POS),
    },
    "discretization": {
        "refine": (int, 1, POS),
        "support_factor": (float, 2.0, POS),
        "basis_order": (int, 1, (1, 2)),
        "quadrature_order": (int, 2, (1, 2, 3, 4, 5)),
        "c_factor": (float, 1.0, POS),
        "xi_measure": (_str, "score", ("score", "distance")),
        "kernel": (_str, "cubic", ("cubic",)),
        "interface_modified": (_bool, True, None),
    },
    "geometry": {
        "voids": (_point_list, (), None),
    },
    "material": {
        "E_matrix": (float, REQUIRED, POS),
        "nu_matrix": (float, REQUIRED, POISSON),
        "gc_matrix": (float, REQUIRED, POS),
        "E_inclusion": (float, None, POS),
        "nu_inclusion": (float, None, POISSON),
        "gc_inclusion": (float, None, POS),
    },
    "czm": {
        "enabled": (_bool, True, None),
        "gc": (float, None, POS),
        "tn_max": (float, None, POS),
        "tt_max": (float, None, POS),
        "mode_one": (_bool, False, None),
    },
    "lengths": {
        "l_d": (float, REQUIRED, POS),
        "l_beta": (float, REQUIRED, POS),
        "h": (float, REQUIRED, POS),
        "kappa": (float, 1e-8, UNIT),
    },
    "blend": {
        "enabled": (_bool, False, None),
        "box": (_float_list, None, None),
        "width": (float, None, POS),
        "volume_fraction": (float, None, UNIT),
    },
    "load": {
        "u_max": (float, None, None),
        "n_steps": (int, None, POS),
        "u_values": (_float_list, None, None),
        "driven": (_str, "top:y", None),
        "fixed": (_str, "bottom:y", None),
        "pins": (_point_list, (), None),
    },
    "solver": {
        "method": (_str, "direct", ("direct", "cg")),
        "max_iterations": (int, 50, POS),
        "tol_damage": (float, 1e-4, POS),
        "tol_displacement": (float, 1e-6, POS),
        "penalty_factor": (float, 1e3, POS),
        "anderson_depth": (int, 0, NONNEG),
    },
    "output": {
        "directory": (_str, "out", None),
        "snapshot_every": (int, 0, NONNEG),
        "vtk": (_bool, False, None),
    },
    "run": {
        "seed": (int, 42, NONNEG),
        "threads": (int, 1, POS),
    },
}

_SIDE_RE = re.compile(r"^(bottom|right|top|left):(x|y)$")


@dataclass
class RunConfig:
    """Validated configuration; ``sections[name][key]`` holds parsed values."""

    path: Path
    sections: dict

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def base_dir(self):
        return self.path.parent if self.path is not None else Path.cwd()

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def image_path(self):
        p = self.sections["image"]["path"]
        return None if p is None else self.resolve(p)

    def output_dir(self, override=None):
        return Path(override) if override else self.resolve(self.sections["output"]["directory"])


def _line_index(text):
    """(section, key) -> line number, from the raw text."""
    where = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]+)\]$", line)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = no
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            where[(section, m.group(1).strip())] = no
    return where


def _check_constraint(value, constraint):
    if constraint is None:
        return None
    vals = value if isinstance(value, tuple) else (value,)
    if isinstance(constraint, tuple):
        return None if value in constraint else f"must be one of {', '.join(map(str, constraint))}"
    for v in vals:
        if isinstance(v, tuple):
            continue
        if constraint == POS and not v > 0:
            return "must be positive"
        if constraint == NONNEG and not v >= 0:
            return "must be nonnegative"
        if constraint == UNIT and not 0 <= v <= 1:
            return "must lie in [0, 1]"
        if constraint == POISSON and not 0 <= v < 0.5:
            return "must lie in [0, 0.5)"
    return None


def parse_sides(text, path=None, line=None, key=None):
    out = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        m = _SIDE_RE.match(item)
        if not m:
            raise ConfigError(f"{key}: expected side:component (e.g. top:y), got {item!r}", path, line, key)
        out.append((m.group(1), 0 if m.group(2) == "x" else 1))
    return tuple(out)


def parse_config_text(text, path=None, check_files=True):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path) if path else "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"syntax error: {exc.message if hasattr(exc, 'message') else exc}", path, line) from exc
    lines = _line_index(text)
    sections = {}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", path, lines.get((sec, None)))
        for key in parser[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", path, lines.get((sec, key)), key)
    for sec, keys in SCHEMA.items():
        out = {}
        for key, (conv, default, constraint) in keys.items():
            line = lines.get((sec, key))
            if parser.has_option(sec, key):
                raw = parser.get(sec, key)
                try:
                    value = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"{sec}.{key}: cannot parse {raw!r} ({exc})", path, line, key) from exc
                problem = _check_constraint(value, constraint)
                if problem:
                    raise ConfigError(f"{sec}.{key} {problem} (got {raw.strip()})", path, line, key)
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {sec}.{key}", path, lines.get((sec, None)), key)
            else:
                value = default
            out[key] = value
        sections[sec] = out

    cfg = RunConfig(Path(path) if path else None, sections)
    _cross_validate(cfg, lines, check_files)
    return cfg


def _cross_validate(cfg, lines, check_files):
    path = cfg.path
    img = cfg["image"]
    if img["path"] is None and img["synthetic"] is None:
        raise ConfigError("[image] needs either path or synthetic", path, lines.get(("image", None)))
    if check_files and img["path"] is not None and not cfg.image_path.is_file():
        raise MissingFileError(f"image not found: {cfg.image_path}")
    model = cfg["model"]
    if model["source"] == "file":
        if model["svm_file"] is None:
            raise ConfigError("model.source = file needs svm_file", path, lines.get(("model", "source")), "svm_file")
        if check_files and not cfg.resolve(model["svm_file"]).is_file():
            raise MissingFileError(f"SVM model file not found: {cfg.resolve(model['svm_file'])}")
    if model["source"] == "circle":
        for k in ("center_x", "center_y", "radius"):
            if model[k] is None:
                raise ConfigError(f"model.source = circle needs {k}", path, lines.get(("model", None)), k)
    svm = cfg["svm"]
    if (svm["sigma"] is None) != (svm["C"] is None):
        raise ConfigError("give both svm.sigma and svm.C, or neither", path, lines.get(("svm", None)))
    if svm["folds"] < 2:
        raise ConfigError("svm.folds must be at least 2", path, lines.get(("svm", "folds")), "folds")
    m = cfg["material"]
    two_phase = model["source"] != "constant"
    for k in ("E_inclusion", "nu_inclusion", "gc_inclusion"):
        if two_phase and m[k] is None:
            raise ConfigError(f"two-phase model needs material.{k}", path, lines.get(("material", None)), k)
    czm = cfg["czm"]
    if czm["enabled"] and two_phase:
        for k in ("gc", "tn_max", "tt_max"):
            if czm[k] is None:
                raise ConfigError(f"czm.{k} is required when the cohesive law is enabled", path,
                                  lines.get(("czm", None)), k)
    bl = cfg["blend"]
    if bl["enabled"]:
        for k in ("box", "width", "volume_fraction"):
            if bl[k] is None:
                raise ConfigError(f"blend.{k} is required when blending is enabled", path,
                                  lines.get(("blend", None)), k)
        if len(bl["box"]) != 4:
            raise ConfigError("blend.box needs x0,y0,x1,y1", path, lines.get(("blend", "box")), "box")
    load = cfg["load"]
    if load["u_values"] is None and (load["u_max"] is None or load["n_steps"] is None):
        raise ConfigError("[load] needs u_values, or u_max and n_steps", path, lines.get(("load", None)))
    for key in ("driven", "fixed"):
        load[key] = parse_sides(load[key], path, lines.get(("load", key)), key)
    if not load["driven"]:
        raise ConfigError("load.driven must name at least one side", path, lines.get(("load", "driven")), "driven")
    for pin in load["pins"]:
        if len(pin) != 3 or pin[2] not in (0.0, 1.0):
            raise ConfigError("load.pins entries are x,y,component with component 0 (x) or 1 (y)",
                              path, lines.get(("load", "pins")), "pins")
    for v in cfg["geometry"]["voids"]:
        if len(v) != 3 or not v[2] > 0:
            raise ConfigError("geometry.voids entries are x,y,radius with radius > 0", path,
                              lines.get(("geometry", "voids")), "voids")


def parse_config(path, check_files=True):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), path, check_files)
