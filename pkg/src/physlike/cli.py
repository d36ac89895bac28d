"""Scenario-driven command line front end.

Exit codes: 0 success, 2 config error, 3 budget failure, 4 verification failure,
5 resource limit.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import svg
from .approximation import Component, ErgodicPresentation, approximate_by_periodic_measure, validate_run
from .chain import build_transition_graph, chain_recurrent_classes, delta_for, scc_decomposition
from .entropy import entropy_gap_report, parry_measure, sft_entropy, spanning_entropy_estimate
from .errors import BudgetFailure, InvalidArgument, PhyslikeError, ResourceLimit, UnsupportedSystem
from .gluing import glue_periodic_pseudo_orbit, glue_report, shadow_glued_orbit
from .measures import DiscreteMeasure, default_family
from .physical import (
    DEFAULT_MASS_THRESHOLD,
    DEFAULT_RADIUS,
    MeasureCluster,
    _pairwise_diameter,
    check_support_inclusion,
    estimate_physical_like_set,
)
from .systems import BUILTINS, PeriodicWord, orbit_segment, point_array, system_from_config

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_VERIFY, EXIT_RESOURCE = 0, 2, 3, 4, 5
SCHEMA_VERSION = 1
COMMANDS = ("classes", "glue", "approx", "basins", "entropy", "verify")


class ConfigError(Exception):
    def __init__(self, where, message):
        super().__init__(f"{where}: {message}")
        self.where = where


# ---------------------------------------------------------------------------
# scenario parsing


def _get(d, key, path, kind, check=None, what=None, default=None):
    if key not in d or d[key] is None:
        return default
    v = d[key]
    ok = isinstance(v, kind) and not (kind is not bool and isinstance(v, bool))
    if ok and check is not None:
        ok = check(v)
    if not ok:
        raise ConfigError(f"{path}.{key}" if path else key, what or f"expected {getattr(kind, '__name__', kind)}")
    return v


def _section(d, key, path=""):
    v = d.get(key, {})
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(f"{path}{key}", "expected an object")
    return v


_POS_INT = (int, lambda v: v >= 1, "expected a positive integer")
_POS_NUM = ((int, float), lambda v: v > 0, "expected a positive number")


@dataclass
class Scenario:
    system_spec: dict
    depth: int | None = None
    delta_boxes: float = 3.0
    samples_per_box: int = 32
    max_boxes: int = 2**18
    n_samples: int = 100
    orbit_length: int = 2000
    checkpoints: list | None = None
    cluster_radius: float = DEFAULT_RADIUS
    mass_threshold: float = DEFAULT_MASS_THRESHOLD
    min_cluster_size: int = 1
    L: int = 20
    seed: int = 0
    approx: dict = field(default_factory=dict)
    glue: dict = field(default_factory=dict)
    entropy: dict = field(default_factory=dict)
    inject_clusters: list = field(default_factory=list)
    tasks: list = field(default_factory=list)
    label: str = ""

    _system: object = None

    @property
    def system(self):
        if self._system is None:
            self._system = system_from_config(self.system_spec)
        return self._system

    @property
    def grid_depth(self):
        if self.depth is not None:
            return self.depth
        return 4 if self.system.symbolic else (5 if self.system.dimension == 2 else 6)


def _parse_one(raw, path, base=None):
    base = dict(base or {})
    for key in raw:
        base[key] = raw[key]
    spec = base.get("system")
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}system", "expected an object with a 'name'")
    name = spec.get("name")
    if not isinstance(name, str):
        raise ConfigError(f"{path}system.name", "expected a string")
    try:
        system = system_from_config(spec)
    except InvalidArgument as exc:
        raise ConfigError(f"{path}system", str(exc)) from exc
    grid = _section(base, "grid", path)
    samp = _section(base, "sampling", path)
    fam = _section(base, "family", path)
    gp = f"{path}grid"
    sp = f"{path}sampling"
    sc = Scenario(system_spec=spec, label=name)
    sc._system = system
    sc.depth = _get(grid, "depth", gp, *_POS_INT)
    sc.delta_boxes = float(_get(grid, "delta_boxes", gp, *_POS_NUM, default=3.0))
    sc.samples_per_box = _get(grid, "samples_per_box", gp, *_POS_INT, default=32)
    sc.max_boxes = _get(grid, "max_boxes", gp, *_POS_INT, default=2**18)
    sc.n_samples = _get(samp, "n_samples", sp, *_POS_INT, default=100)
    sc.orbit_length = _get(samp, "orbit_length", sp, *_POS_INT, default=2000)
    cps = samp.get("checkpoints")
    if cps is not None:
        if not isinstance(cps, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in cps):
            raise ConfigError(f"{sp}.checkpoints", "expected a list of integers")
        if any(b <= a for a, b in zip(cps, cps[1:])) or not cps or cps[0] < 1 or cps[-1] > sc.orbit_length:
            raise ConfigError(f"{sp}.checkpoints", "must be increasing and within [1, orbit_length]")
    sc.checkpoints = cps
    sc.cluster_radius = float(_get(samp, "cluster_radius", sp, *_POS_NUM, default=DEFAULT_RADIUS))
    sc.mass_threshold = float(
        _get(samp, "mass_threshold", sp, (int, float), default=DEFAULT_MASS_THRESHOLD, check=lambda v: 0 <= v < 1, what="expected a number in [0, 1)")
    )
    sc.min_cluster_size = _get(samp, "min_cluster_size", sp, *_POS_INT, default=1)
    sc.L = _get(fam, "L", f"{path}family", *_POS_INT, default=20)
    sc.seed = _get(base, "seed", path.rstrip("."), int, default=0, check=lambda v: v >= 0, what="expected a nonnegative integer")
    sc.approx = _section(base, "approx", path)
    sc.glue = _section(base, "glue", path)
    sc.entropy = _section(base, "entropy", path)
    inj = base.get("inject_clusters", [])
    if not isinstance(inj, list):
        raise ConfigError(f"{path}inject_clusters", "expected a list")
    sc.inject_clusters = inj
    tasks = base.get("tasks", [])
    if not isinstance(tasks, list) or any(t not in COMMANDS for t in tasks):
        raise ConfigError(f"{path}tasks", f"expected a list drawn from {list(COMMANDS)}")
    sc.tasks = tasks
    return sc


def load_scenarios(path):
    """Parse a scenario file; returns a list (one entry per system block)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", f"invalid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    if raw.get("schema") != SCHEMA_VERSION:
        raise ConfigError("schema", f"expected schema {SCHEMA_VERSION}, got {raw.get('schema')!r}")
    if "systems" in raw:
        blocks = raw["systems"]
        if blocks == "zoo":
            blocks = [{"system": {"name": name}} for name in BUILTINS]
        if not isinstance(blocks, list) or not blocks:
            raise ConfigError("systems", "expected a nonempty list or \"zoo\"")
        base = {k: v for k, v in raw.items() if k != "systems"}
        out = []
        for i, b in enumerate(blocks):
            if not isinstance(b, dict):
                raise ConfigError(f"systems[{i}]", "expected an object")
            out.append(_parse_one(b, f"systems[{i}].", base))
        return out
    return [_parse_one(raw, "")]


def parse_point(system, value, where):
    """JSON point: number, ``"p/q"``, list of those, or ``{"periodic": [...]}`` / ``{"word": [...]}``."""
    try:
        if system.symbolic:
            if isinstance(value, dict) and "periodic" in value:
                return PeriodicWord(tuple(int(s) for s in value["periodic"]))
            if isinstance(value, dict) and "word" in value:
                return np.asarray(value["word"], dtype=np.int8)
            if isinstance(value, list):
                return np.asarray(value, dtype=np.int8)
            raise ValueError("symbolic points are {\"periodic\": [...]} or symbol lists")
        coords = value if isinstance(value, list) else [value]
        parsed = []
        for c in coords:
            if isinstance(c, str):
                parsed.append(Fraction(c))
            elif isinstance(c, int) and not isinstance(c, bool):
                parsed.append(Fraction(c))
            elif isinstance(c, float):
                parsed.append(c)
            else:
                raise ValueError(f"bad coordinate {c!r}")
        if all(isinstance(c, Fraction) for c in parsed):
            return tuple(parsed)
        return np.asarray([float(c) for c in parsed])
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ConfigError(where, str(exc)) from exc


# ---------------------------------------------------------------------------
# output helpers


def _timestamp():
    return datetime.now(timezone.utc).isoformat()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def write_json(out_dir, name, payload):
    data = dict(_clean(payload))
    data["timestamp"] = _timestamp()
    (out_dir / name).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def _log(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands


def _graph(sc, workers):
    d = sc.grid_depth
    return build_transition_graph(
        sc.system, d, delta_for(d, sc.delta_boxes), samples_per_box=sc.samples_per_box, seed=sc.seed, max_boxes=sc.max_boxes, workers=workers
    )


def _classes_payload(sc, graph):
    classes, trivial = scc_decomposition(graph)
    return {
        "system": sc.label,
        "depth": graph.grid.depth,
        "delta": graph.delta,
        "delta_boxes": sc.delta_boxes,
        "effective_delta": graph.effective_delta,
        "samples_per_box": graph.samples_per_box,
        "seed": graph.seed,
        "n_boxes": graph.n_boxes,
        "n_edges": graph.n_edges,
        "n_classes": len(classes),
        "classes": [c.to_json(graph) for c in classes],
        "diagnostics": {"trivial_boxes": trivial, "n_trivial": len(trivial)},
    }


def cmd_classes(scs, out, workers):
    payloads = []
    for sc in scs:
        graph = _graph(sc, workers)
        payloads.append(_classes_payload(sc, graph))
        if len(scs) == 1:
            (out / "edges.csv").write_text(graph.edges_csv())
            if sc.system.symbolic or sc.system.dimension <= 2:
                (out / "classes.svg").write_text(svg.class_heatmap(graph.grid, chain_recurrent_classes(graph), title=f"{sc.label} classes"))
    write_json(out, "classes.json", payloads[0] if len(payloads) == 1 else {"systems": payloads})
    return EXIT_OK


def _default_segments(sc, graph, count=2):
    """Seeded segments whose start and end boxes both sit in the largest class."""
    cls = max(chain_recurrent_classes(graph), key=len)
    system = sc.system
    segs = []
    for attempt in range(4096):
        rng = np.random.default_rng([sc.seed, 0x676C, attempt])
        n = int(rng.integers(5, 30))
        x = system.sample_points([rng], length=n + 1)[0]
        boxes = graph.grid.box_of(orbit_segment(system, x, n + 1)[[0, n]])
        if all(int(b) in cls for b in boxes):
            segs.append((x, n))
            if len(segs) == count:
                break
    if not segs:
        raise ConfigError("glue.segments", "could not find default segments inside the largest class; give them explicitly")
    return cls, segs


def cmd_glue(scs, out, workers):
    sc = scs[0]
    graph = _graph(sc, workers)
    classes = chain_recurrent_classes(graph)
    if sc.glue.get("segments"):
        segs = []
        for i, s in enumerate(sc.glue["segments"]):
            if not isinstance(s, dict) or "point" not in s or "length" not in s:
                raise ConfigError(f"glue.segments[{i}]", "expected {\"point\": ..., \"length\": n}")
            segs.append((parse_point(sc.system, s["point"], f"glue.segments[{i}].point"), int(s["length"])))
        first_box = int(graph.grid.box_of(point_array(sc.system, segs[0][0]).reshape(1, -1))[0])
        hosts = [c for c in classes if first_box in c]
        if not hosts:
            raise ConfigError("glue.segments[0]", "start point is not in any chain recurrent class")
        cls = hosts[0]
    else:
        cls, segs = _default_segments(sc, graph)
    schedule, pseudo = glue_periodic_pseudo_orbit(graph, cls, segs)
    cert = shadow_glued_orbit(pseudo, schedule, sc.system, graph)
    report = glue_report(schedule, pseudo, cert, sidecar_path=out / "glue_pseudo_orbit.bin")
    report["pseudo_orbit_valid"] = pseudo.is_valid(sc.system)
    report["class_id"] = cls.id
    write_json(out, "glue_report.json", report)
    ok = report["pseudo_orbit_valid"] and (cert.holds or not cert.guaranteed) and schedule.check()
    return EXIT_OK if ok else EXIT_VERIFY


def _presentation(sc):
    comps = sc.approx.get("components")
    if not isinstance(comps, list) or not comps:
        raise ConfigError("approx.components", "expected a nonempty list")
    out = []
    for i, c in enumerate(comps):
        where = f"approx.components[{i}]"
        if not isinstance(c, dict) or "point" not in c:
            raise ConfigError(where, "expected {\"point\": ..., \"weight\": ...}")
        w = c.get("weight", 1)
        try:
            weight = w if isinstance(w, int) and not isinstance(w, bool) else Fraction(str(w))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{where}.weight", str(exc)) from exc
        ref = c.get("reference")
        if isinstance(ref, dict):
            ref = DiscreteMeasure(np.asarray(ref["atoms"]), np.asarray(ref["weights"]))
        elif ref not in (None, "lebesgue"):
            raise ConfigError(f"{where}.reference", "expected \"lebesgue\", a measure object or null")
        out.append(Component(parse_point(sc.system, c["point"], f"{where}.point"), weight, ref))
    try:
        return ErgodicPresentation(tuple(out))
    except InvalidArgument as exc:
        raise ConfigError("approx.components", str(exc)) from exc


def cmd_approx(scs, out, workers):
    sc = scs[0]
    eps = _get(sc.approx, "epsilon", "approx", *_POS_NUM)
    if eps is None:
        raise ConfigError("approx.epsilon", "required")
    cap = _get(sc.approx, "max_total_length", "approx", *_POS_INT, default=2**22)
    pres = _presentation(sc)
    try:
        run = approximate_by_periodic_measure(pres, float(eps), system=sc.system, max_total_length=cap, seed=sc.seed, workers=workers)
    except BudgetFailure as exc:
        write_json(out, "approx_report.json", {"epsilon": eps, "budget_failure": {"term": exc.term, "message": str(exc)}, "valid": False})
        _log(f"budget failure: {exc.term}: {exc}")
        return EXIT_BUDGET
    except UnsupportedSystem as exc:
        raise ConfigError("system", str(exc)) from exc
    report = run.to_json()
    check = validate_run(run)
    report["valid"] = check.ok
    report["validation"] = check.to_json()
    write_json(out, "approx_report.json", report)
    return EXIT_OK if check.ok else EXIT_VERIFY


def _estimate(sc, workers):
    fam = default_family(sc.system, sc.L)
    est = estimate_physical_like_set(
        sc.system,
        fam,
        sc.n_samples,
        sc.orbit_length,
        checkpoints=sc.checkpoints,
        cluster_radius=sc.cluster_radius,
        seed=sc.seed,
        workers=workers,
        min_cluster_size=sc.min_cluster_size,
    )
    return fam, est


def _basins_rows(sc, fam, est):
    threshold = 2 * sc.cluster_radius
    lines = []
    dim_cols = 1 if sc.system.symbolic else sc.system.dimension
    header = ["sample_id"] + [f"x0_{j}" for j in range(dim_cols)] + ["cluster_id", "diameter", "class"]
    lines.append(",".join(header))
    for i, x in enumerate(est.initial_points):
        diam = _pairwise_diameter(est.sample_moments[i], fam)
        if sc.system.symbolic:
            coords = ["".join(str(int(s)) for s in np.asarray(x)[:16])]
        else:
            coords = [repr(float(c)) for c in point_array(sc.system, x)]
        label = "regular" if diam <= threshold else "irregular"
        lines.append(",".join([str(i)] + coords + [str(int(est.sample_cluster[i])), repr(float(diam)), label]))
    return "\n".join(lines) + "\n"


def cmd_basins(scs, out, workers):
    payloads = []
    for sc in scs:
        fam, est = _estimate(sc, workers)
        payload = est.to_json()
        payload["system"] = sc.label
        payload["family_size"] = len(fam)
        payloads.append(payload)
        if len(scs) == 1:
            (out / "basins.csv").write_text(_basins_rows(sc, fam, est))
            if not sc.system.symbolic and sc.system.dimension <= 2:
                pts = [point_array(sc.system, x) for x in est.initial_points]
                (out / "basins.svg").write_text(svg.basin_map(pts, est.sample_cluster, len(est.clusters), title=f"{sc.label} basins"))
    write_json(out, "clusters.json", payloads[0] if len(payloads) == 1 else {"systems": payloads})
    return EXIT_OK


def _injected(sc):
    out = []
    for i, c in enumerate(sc.inject_clusters):
        where = f"inject_clusters[{i}]"
        if not isinstance(c, dict) or "atoms" not in c or "weights" not in c:
            raise ConfigError(where, "expected {\"atoms\": [...], \"weights\": [...]}")
        try:
            atoms = np.asarray(c["atoms"], dtype=np.int8 if sc.system.symbolic else float)
            mu = DiscreteMeasure(atoms, np.asarray(c["weights"], dtype=float))
        except (InvalidArgument, ValueError, TypeError) as exc:
            raise ConfigError(where, str(exc)) from exc
        out.append(mu)
    return out


def cmd_verify(scs, out, workers):
    systems, cluster_payloads = [], []
    for sc in scs:
        graph = _graph(sc, workers)
        classes = chain_recurrent_classes(graph)
        fam, est = _estimate(sc, workers)
        clusters = list(est.clusters)
        for mu in _injected(sc):
            clusters.append(MeasureCluster.from_measure(len(clusters), mu, members=0, lebesgue_fraction=0.0, family=fam))
        report = check_support_inclusion(clusters, classes, graph.grid, sc.mass_threshold)
        systems.append(
            {
                "system": sc.label,
                "depth": graph.grid.depth,
                "delta_boxes": sc.delta_boxes,
                "n_classes": len(classes),
                "n_clusters": len(clusters),
                "injected": len(clusters) - len(est.clusters),
                "report": report.to_json(),
            }
        )
        payload = est.to_json()
        payload["system"] = sc.label
        cluster_payloads.append(payload)
    passed = all(s["report"]["passed"] for s in systems)
    write_json(out, "clusters.json", {"systems": cluster_payloads})
    write_json(out, "inclusion_report.json", {"passed": passed, "systems": systems})
    if not passed:
        bad = [s["system"] for s in systems if not s["report"]["passed"]]
        _log(f"support inclusion failed for: {', '.join(bad)}")
    return EXIT_OK if passed else EXIT_VERIFY


def _candidates(sc):
    raw = sc.entropy.get("candidates")
    if raw is None:
        return [{"type": "parry"}]
    if not isinstance(raw, list):
        raise ConfigError("entropy.candidates", "expected a list")
    out = []
    for i, c in enumerate(raw):
        if not isinstance(c, dict) or c.get("type") not in ("periodic", "parry", "markov"):
            raise ConfigError(f"entropy.candidates[{i}]", "expected {\"type\": \"periodic\"|\"parry\"|\"markov\", ...}")
        out.append(c)
    return out


def cmd_entropy(scs, out, workers):
    sc = scs[0]
    system = sc.system
    if system.symbolic:
        est = sft_entropy(system)
        payload = est.to_json()
        pi, P = parry_measure(system)
        payload["parry"] = {"stationary": pi.tolist(), "transition": P.tolist()}
        try:
            gap = entropy_gap_report(system, _candidates(sc))
        except InvalidArgument as exc:
            raise ConfigError("entropy.candidates", str(exc)) from exc
        payload["gap_report"] = gap.to_json()
    else:
        sp = sc.entropy
        n_seeds = _get(sp, "n_seeds", "entropy", *_POS_INT, default=2000)
        n = _get(sp, "n", "entropy", *_POS_INT, default=8)
        eps = float(_get(sp, "epsilon", "entropy", *_POS_NUM, default=1 / 16))
        rngs = [np.random.default_rng([sc.seed, 0x656E, i]) for i in range(n_seeds)]
        seeds = [np.asarray([float(c) for c in p]) for p in system.sample_points(rngs)]
        payload = spanning_entropy_estimate(system, seeds, n, eps).to_json()
        payload["n_seeds"] = n_seeds
    payload["system"] = sc.label
    write_json(out, "entropy.json", payload)
    return EXIT_OK


HANDLERS = {
    "classes": cmd_classes,
    "glue": cmd_glue,
    "approx": cmd_approx,
    "basins": cmd_basins,
    "entropy": cmd_entropy,
    "verify": cmd_verify,
}


def cmd_all(scs, out, workers):
    tasks = scs[0].tasks or (["classes", "basins", "entropy", "verify"] + (["approx"] if scs[0].approx else []) + (["glue"] if scs[0].glue else []))
    code = EXIT_OK
    for t in tasks:
        code = max(code, HANDLERS[t](scs, out, workers))
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="physlike", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS + ("all",))
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        _log("--workers must be >= 1")
        return EXIT_CONFIG
    try:
        scs = load_scenarios(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "expected a nonnegative integer")
            for sc in scs:
                sc.seed = args.seed
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler = cmd_all if args.command == "all" else HANDLERS[args.command]
        return handler(scs, out, args.workers)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except ResourceLimit as exc:
        _log(f"resource limit: {exc}")
        return EXIT_RESOURCE
    except BudgetFailure as exc:
        _log(f"budget failure: {exc.term}: {exc}")
        return EXIT_BUDGET
    except InvalidArgument as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except PhyslikeError as exc:
        _log(f"error: {exc}")
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
