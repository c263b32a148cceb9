"""Scenario documents: road, vehicle, obstacles, start state and objective.

Scenarios are JSON documents with a ``schema_version`` field; see
``docs/scenario_schema.md`` for the field reference. Absent fields take the
defaults below (the 24 m tractor-trailer, a 0.2 m grid, objective 3).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Any, Dict, Optional

from .corridor import Corridor, Obstacle
from .errors import DomainError, PlannerError, ScenarioError
from .geometry import CartesianPose, ReferencePath, Segment, mirrored
from .objectives import ObjectiveKind, ObjectiveSpec
from .vehicle import SMALL_VEHICLE, RoadState, VehicleParams

SCHEMA_VERSION = 1
FIXTURES = ("straight", "uturn_0065", "uturn_obstacles", "roundabout_0056")

_VEHICLE_PRESETS = {"default": VehicleParams(), "small": SMALL_VEHICLE}
_PLANNER_KEYS = {"ds", "horizon", "max_sqp_iters", "step_tol", "kappa_tol", "trust_region",
                 "slack_weight", "body_spacing", "max_shrinks", "merit_tol", "qp_method", "obstacle_pad"}


@dataclass(frozen=True)
class Scenario:
    name: str
    path: ReferencePath
    left_widths: tuple
    right_widths: tuple
    vehicle: VehicleParams = VehicleParams()
    obstacles: tuple = ()
    s_start: float = 0.0
    z_start: RoadState = RoadState()
    kappa_start: float = 0.0
    objective: ObjectiveSpec = ObjectiveSpec()
    planner: Dict[str, Any] = field(default_factory=dict)
    margin: float = 0.0
    notes: str = ""

    @property
    def corridor(self) -> Corridor:
        return Corridor(self.path, self.left_widths, self.right_widths, self.obstacles, self.margin)

    @property
    def ds(self) -> float:
        return float(self.planner.get("ds", 0.2))

    @property
    def horizon(self) -> float:
        return float(self.planner.get("horizon", self.path.total_length - self.s_start))

    def with_objective(self, kind=None, K=None, smooth_weight=None) -> "Scenario":
        o = self.objective
        kind = o.kind if kind is None else ObjectiveKind(int(kind))
        if K is None:
            K = o.K if o.K is not None else 0.45
        w = o.smooth_weight if smooth_weight is None else smooth_weight
        return replace(self, objective=ObjectiveSpec(kind, K, w))

    def with_planner(self, **overrides) -> "Scenario":
        p = dict(self.planner)
        p.update({k: v for k, v in overrides.items() if v is not None})
        return replace(self, planner=p)

    def mirrored(self) -> "Scenario":
        """Reflection about the start tangent: curvatures, sides and obstacles swapped."""
        z = self.z_start
        return replace(
            self,
            name=self.name + "_mirrored",
            path=mirrored(self.path),
            left_widths=self.right_widths,
            right_widths=self.left_widths,
            obstacles=tuple(o.mirrored() for o in self.obstacles),
            z_start=RoadState(-z.e_y, -z.e_psi, -z.beta1),
            kappa_start=-self.kappa_start,
        )

    def validate(self) -> "Scenario":
        v = self.vehicle
        if abs(self.kappa_start) > v.kappa_max:
            raise ScenarioError("kappa_start exceeds kappa_max", field="start.kappa")
        if not 0.0 <= self.s_start < self.path.total_length:
            raise ScenarioError("start station outside the path", field="start.s_m")
        ds, hor = self.ds, self.horizon
        if not ds > 0:
            raise ScenarioError("ds must be > 0", field="planner.ds")
        if not hor >= 2 * ds:
            raise ScenarioError("horizon must be at least two grid steps", field="planner.horizon")
        if self.s_start + hor > self.path.total_length + 1e-9:
            raise ScenarioError("planning window extends beyond the path", field="planner.horizon")
        lo, hi = -self.right_widths[self.path.segment_index(self.s_start)], \
            self.left_widths[self.path.segment_index(self.s_start)]
        if not lo < self.z_start.e_y < hi:
            raise ScenarioError("start state outside the road", field="start.e_y")
        if abs(self.z_start.e_psi) >= math.pi / 2 or abs(self.z_start.beta1) >= math.pi / 2:
            raise ScenarioError("start state outside the model domain", field="start")
        return self


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def uturn(curvature: float = 0.065, *, vehicle: VehicleParams = VehicleParams(), lead_in: float = 40.0,
          lead_out: float = 46.0, margin_before: float = 25.0, margin_after: float = 15.0,
          half_width: float = 10.0, ds: float = 0.2, objective: ObjectiveSpec = ObjectiveSpec(),
          name: Optional[str] = None, obstacles=(), horizon: Optional[float] = None,
          turn: float = math.pi) -> Scenario:
    """Turn of ``turn`` radians (a U-turn by default) between two straights.

    The planning window starts ``lead_in`` before the arc and ends
    ``lead_out`` after it, unless ``horizon`` fixes the window length, in
    which case the run-out after the arc absorbs the difference. The path
    extends further on both sides so the whole vehicle always projects onto it.
    """
    arc = turn / abs(curvature)
    if horizon is not None:
        lead_out = horizon - lead_in - arc
        if lead_out <= 0:
            raise ScenarioError("horizon too short to cover the arc", field="planner.horizon")
    segs = (Segment(margin_before + lead_in, 0.0), Segment(arc, curvature),
            Segment(lead_out + margin_after, 0.0))
    path = ReferencePath(segs, CartesianPose(0.0, 0.0, 0.0), ds)
    horizon = round((lead_in + arc + lead_out) / ds) * ds
    half_width = half_width if isinstance(half_width, tuple) else (half_width, half_width)
    return Scenario(
        name=name or f"uturn_{curvature:g}",
        path=path,
        left_widths=(half_width[0],) * 3,
        right_widths=(half_width[1],) * 3,
        vehicle=vehicle,
        obstacles=tuple(obstacles),
        s_start=margin_before,
        objective=objective,
        planner={"ds": ds, "horizon": horizon},
    )


def straight(length: float = 60.0, *, half_width: float = 3.0, ds: float = 0.2,
             objective: ObjectiveSpec = ObjectiveSpec(), vehicle: VehicleParams = VehicleParams()) -> Scenario:
    path = ReferencePath((Segment(25.0 + length + 10.0, 0.0),), CartesianPose(0.0, 0.0, 0.0), ds)
    return Scenario("straight", path, (half_width,), (half_width,), vehicle=vehicle, s_start=25.0,
                    objective=objective, planner={"ds": ds, "horizon": length})


# ---------------------------------------------------------------------------
# (de)serialization
# ---------------------------------------------------------------------------

def _num(v, name, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"expected a number, got {type(v).__name__}", field=name)
    v = float(v)
    if not math.isfinite(v):
        raise ScenarioError("must be finite", field=name)
    if positive and not v > 0:
        raise ScenarioError(f"must be > 0, got {v:g}", field=name)
    if nonneg and v < 0:
        raise ScenarioError(f"must be >= 0, got {v:g}", field=name)
    return v


def _obj(d, name, allowed):
    if not isinstance(d, dict):
        raise ScenarioError("expected an object", field=name)
    extra = set(d) - set(allowed)
    if extra:
        raise ScenarioError(f"unknown key(s) {sorted(extra)}", field=name)
    return d


def scenario_from_dict(doc: dict) -> Scenario:
    _obj(doc, "<root>", {"schema_version", "name", "notes", "path", "vehicle", "obstacles", "start",
                         "objective", "planner", "corridor"})
    ver = doc.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {ver!r} (expected {SCHEMA_VERSION})",
                            field="schema_version")
    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        raise ScenarioError("expected a string", field="name")

    p = _obj(doc.get("path"), "path", {"start_pose", "segments"})
    sp_ = _obj(p.get("start_pose", {}), "path.start_pose", {"x", "y", "heading"})
    start_pose = CartesianPose(_num(sp_.get("x", 0.0), "path.start_pose.x"),
                               _num(sp_.get("y", 0.0), "path.start_pose.y"),
                               _num(sp_.get("heading", 0.0), "path.start_pose.heading"))
    segs_doc = p.get("segments")
    if not isinstance(segs_doc, list) or not segs_doc:
        raise ScenarioError("expected a nonempty list", field="path.segments")
    segs, lw, rw = [], [], []
    for k, sd in enumerate(segs_doc):
        f = f"path.segments[{k}]"
        _obj(sd, f, {"length_m", "curvature_inv_m", "left_width_m", "right_width_m"})
        if "length_m" not in sd:
            raise ScenarioError("missing", field=f + ".length_m")
        segs.append(Segment(_num(sd["length_m"], f + ".length_m", positive=True),
                            _num(sd.get("curvature_inv_m", 0.0), f + ".curvature_inv_m")))
        lw.append(_num(sd.get("left_width_m", 3.5), f + ".left_width_m"))
        rw.append(_num(sd.get("right_width_m", 3.5), f + ".right_width_m"))
        if not -rw[-1] < lw[-1]:
            raise ScenarioError("road widths leave no free space", field=f)

    vdoc = doc.get("vehicle", {})
    if isinstance(vdoc, str):
        if vdoc not in _VEHICLE_PRESETS:
            raise ScenarioError(f"unknown preset {vdoc!r}", field="vehicle")
        vehicle = _VEHICLE_PRESETS[vdoc]
    else:
        names = [f_.name for f_ in fields(VehicleParams)]
        _obj(vdoc, "vehicle", names + ["preset"])
        base = _VEHICLE_PRESETS[vdoc.get("preset", "default")] if vdoc.get("preset", "default") in \
            _VEHICLE_PRESETS else None
        if base is None:
            raise ScenarioError(f"unknown preset {vdoc.get('preset')!r}", field="vehicle.preset")
        vals = {n: _num(vdoc[n], f"vehicle.{n}") for n in names if n in vdoc}
        try:
            vehicle = replace(base, **vals)
        except DomainError as exc:
            raise ScenarioError(str(exc), field="vehicle") from None

    obstacles = []
    obs_doc = doc.get("obstacles", [])
    if not isinstance(obs_doc, list):
        raise ScenarioError("expected a list", field="obstacles")
    for k, od in enumerate(obs_doc):
        f = f"obstacles[{k}]"
        _obj(od, f, {"s_start", "s_end", "ey_min", "ey_max", "pass_side"})
        try:
            obstacles.append(Obstacle(_num(od.get("s_start"), f + ".s_start"),
                                      _num(od.get("s_end"), f + ".s_end"),
                                      _num(od.get("ey_min"), f + ".ey_min"),
                                      _num(od.get("ey_max"), f + ".ey_max"),
                                      od.get("pass_side")))
        except DomainError as exc:
            raise ScenarioError(str(exc), field=f) from None

    st = _obj(doc.get("start", {}), "start", {"s_m", "e_y", "e_psi", "beta1", "kappa"})
    z0 = RoadState(_num(st.get("e_y", 0.0), "start.e_y"), _num(st.get("e_psi", 0.0), "start.e_psi"),
                   _num(st.get("beta1", 0.0), "start.beta1"))

    od = _obj(doc.get("objective", {}), "objective", {"kind", "K", "smooth_weight"})
    kind = od.get("kind", 3)
    if kind not in (1, 2, 3, 4, 5) or isinstance(kind, bool):
        raise ScenarioError(f"kind must be 1..5, got {kind!r}", field="objective.kind")
    try:
        objective = ObjectiveSpec(ObjectiveKind(kind),
                                  _num(od.get("K", 0.45), "objective.K") if kind == 3 else None,
                                  _num(od.get("smooth_weight", 1.0), "objective.smooth_weight", positive=True))
    except PlannerError as exc:
        raise ScenarioError(str(exc), field="objective") from None

    pl = _obj(doc.get("planner", {}), "planner", _PLANNER_KEYS)
    planner = {}
    for k_, v in pl.items():
        if k_ == "trust_region":
            if not isinstance(v, list) or len(v) != 4:
                raise ScenarioError("expected 4 numbers", field="planner.trust_region")
            planner[k_] = [_num(x, "planner.trust_region", positive=True) for x in v]
        elif k_ in ("max_sqp_iters", "max_shrinks"):
            planner[k_] = int(_num(v, f"planner.{k_}", positive=k_ == "max_sqp_iters", nonneg=True))
        elif k_ == "obstacle_pad":
            planner[k_] = _num(v, "planner.obstacle_pad", nonneg=True)
        elif k_ == "qp_method":
            if v not in ("auto", "admm", "ipm"):
                raise ScenarioError(f"unknown method {v!r}", field="planner.qp_method")
            planner[k_] = v
        else:
            planner[k_] = _num(v, f"planner.{k_}", positive=True)

    cd = _obj(doc.get("corridor", {}), "corridor", {"margin_m"})
    margin = _num(cd.get("margin_m", 0.0), "corridor.margin_m", nonneg=True)

    try:
        path = ReferencePath(tuple(segs), start_pose, planner.get("ds", 0.2))
    except DomainError as exc:
        raise ScenarioError(str(exc), field="path") from None
    sc = Scenario(name, path, tuple(lw), tuple(rw), vehicle, tuple(obstacles),
                  _num(st.get("s_m", 0.0), "start.s_m", nonneg=True), z0,
                  _num(st.get("kappa", 0.0), "start.kappa"), objective, planner, margin,
                  doc.get("notes", ""))
    return sc.validate()


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, line=exc.lineno) from None
    return scenario_from_dict(doc)


def load_scenario_file(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def load_fixture(name: str) -> Scenario:
    if name not in FIXTURES:
        raise ScenarioError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    text = resources.files("ttplan.data").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return load_scenario(text)


def _fmt(v: float) -> float:
    return float(f"{v:.9g}")


def scenario_to_dict(sc: Scenario) -> dict:
    """Canonical document form: every field explicit, numbers at 9 significant digits."""
    v = sc.vehicle
    segs = [{"length_m": _fmt(g.length), "curvature_inv_m": _fmt(g.curvature),
             "left_width_m": _fmt(lw), "right_width_m": _fmt(rw)}
            for g, lw, rw in zip(sc.path.segments, sc.left_widths, sc.right_widths)]
    obj = {"kind": int(sc.objective.kind), "smooth_weight": _fmt(sc.objective.smooth_weight)}
    if sc.objective.K is not None:
        obj["K"] = _fmt(sc.objective.K)
    planner = {}
    for k in sorted(sc.planner):
        val = sc.planner[k]
        if isinstance(val, (list, tuple)):
            planner[k] = [_fmt(x) for x in val]
        elif k in ("max_sqp_iters", "max_shrinks"):
            planner[k] = int(val)
        elif isinstance(val, str):
            planner[k] = val
        else:
            planner[k] = _fmt(val)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "path": {
            "start_pose": {"x": _fmt(sc.path.start_pose.x), "y": _fmt(sc.path.start_pose.y),
                           "heading": _fmt(sc.path.start_pose.heading)},
            "segments": segs,
        },
        "vehicle": {f_.name: _fmt(getattr(v, f_.name)) for f_ in fields(VehicleParams)},
        "obstacles": [{"s_start": _fmt(o.s_start), "s_end": _fmt(o.s_end), "ey_min": _fmt(o.ey_min),
                       "ey_max": _fmt(o.ey_max), "pass_side": o.pass_side} for o in sc.obstacles],
        "start": {"s_m": _fmt(sc.s_start), "e_y": _fmt(sc.z_start.e_y), "e_psi": _fmt(sc.z_start.e_psi),
                  "beta1": _fmt(sc.z_start.beta1), "kappa": _fmt(sc.kappa_start)},
        "objective": obj,
        "planner": planner,
        "corridor": {"margin_m": _fmt(sc.margin)},
    }
    if sc.notes:
        doc["notes"] = sc.notes
    return doc


def save_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2) + "\n"
