"""Model description files: a small versioned line format.

    format = 1

    [grid]
    n = 64
    length = 1.0
    bc = periodic            # periodic | no_flux | dirichlet (+ left/right)

    [state]                  # one section per state (two for coupled runs)
    name = rho
    kind = conserved         # conserved | nonconserved
    ic = 1 + 0.5*sin(2*pi*x)

    [functional]
    variant = boltzmann      # dirichlet | boltzmann | thermal | phase_field
                             # thermal: c_v; phase_field: w, kappa,
                             # latent_heat, t_melt, c_v

    [metric]
    variant = wasserstein    # l2m (m or eta) | wasserstein (M or H,
    M = rho                  # face_mean) | coupled (H_u, H_c, H_uc)
    face_mean = log_mean

    [time]
    dt = 1e-4
    steps = 100
    scheme = semi_implicit   # explicit | semi_implicit

    [noise]                  # optional
    epsilon = 0.1
    seed = 42

``#`` starts a comment; keys may not repeat inside a section; unknown keys
and unknown sections are errors. Coefficients (mobility / resistivity) are
expressions over x and the declared state names; initial conditions over x
only. Every failure is a :class:`ModelError` carrying line/column.
"""

import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ModelError
from .expressions import (Expr, BinOp, Num, constant_value, evaluate,
                          free_names, linear_coefficient, parse_expr,
                          to_source)
from .functionals import Boltzmann, Dirichlet, PhaseField, Thermal
from .grid import Field, Grid1D
from .metrics import (ARITHMETIC, ConstantMobility, CoupledMetric,
                      ExprMobility, L2Metric, LinearMobility, LOG_MEAN,
                      WassersteinMetric)

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_SECTION = re.compile(r"\[([A-Za-z_][A-Za-z0-9_]*)\]$")
_RESERVED_NAMES = {"x", "pi", "sin", "cos", "tanh", "exp", "format"}

_SECTION_KEYS = {
    "grid": {"n", "length", "bc", "left", "right"},
    "state": {"name", "kind", "ic"},
    "functional": {"variant", "c_v", "w", "kappa", "latent_heat", "t_melt"},
    "metric": {"variant", "m", "eta", "M", "H", "H_u", "H_c", "H_uc", "face_mean"},
    "time": {"dt", "steps", "scheme"},
    "noise": {"epsilon", "seed"},
}


@dataclass(frozen=True)
class GridSection:
    n: int
    length: float
    bc: str
    left: float | None = None
    right: float | None = None


@dataclass(frozen=True)
class StateSection:
    name: str
    kind: str
    ic: Expr


@dataclass(frozen=True)
class FunctionalSection:
    variant: str
    params: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class MetricSection:
    variant: str
    coeffs: tuple[tuple[str, Expr], ...] = ()
    face_mean: str | None = None


@dataclass(frozen=True)
class TimeSection:
    dt: float
    steps: int
    scheme: str


@dataclass(frozen=True)
class NoiseSection:
    epsilon: float
    seed: int


@dataclass(frozen=True)
class ModelSpec:
    format_version: int
    grid: GridSection
    states: tuple[StateSection, ...]
    functional: FunctionalSection
    metric: MetricSection
    time: TimeSection
    noise: NoiseSection | None = None


class _Entry:
    __slots__ = ("value", "line", "col")

    def __init__(self, value, line, col):
        self.value = value
        self.line = line
        self.col = col


def _split_lines(text: bytes | str) -> list[str]:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as err:
            raise ModelError(f"model file is not UTF-8 ({err.reason} at byte "
                             f"{err.start})") from err
    return text.splitlines()


def parse_model(text: bytes | str) -> ModelSpec:
    """Parse and validate a model description; raises :class:`ModelError`
    with line/column on every failure."""
    lines = _split_lines(text)
    fmt: _Entry | None = None
    sections: list[tuple[str, int, dict[str, _Entry]]] = []
    current: dict[str, _Entry] | None = None

    for lineno, raw in enumerate(lines, 1):
        if len(raw) > 100_000:
            raise ModelError("line too long", line=lineno)
        cut = raw.find("#")
        line = (raw if cut < 0 else raw[:cut]).rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        indent = len(line) - len(stripped)
        if stripped.startswith("["):
            m = _SECTION.match(stripped)
            if not m:
                raise ModelError(f"malformed section header {stripped!r}",
                                 line=lineno, col=indent + 1)
            name = m.group(1)
            if name not in _SECTION_KEYS:
                raise ModelError(f"unknown section [{name}]", line=lineno,
                                 col=indent + 1)
            if name != "state":
                prior = [ln for nm, ln, _ in sections if nm == name]
                if prior:
                    raise ModelError(
                        f"duplicate section [{name}] (already opened at line "
                        f"{prior[0]})", line=lineno, col=indent + 1)
            current = {}
            sections.append((name, lineno, current))
            continue
        eq = stripped.find("=")
        if eq < 0:
            raise ModelError(f"expected 'key = value', got {stripped!r}",
                             line=lineno, col=indent + 1)
        key = stripped[:eq].strip()
        value = stripped[eq + 1:].strip()
        if not _IDENT.match(key):
            raise ModelError(f"bad key {key!r}", line=lineno, col=indent + 1)
        if not value:
            raise ModelError(f"key {key!r} has no value", line=lineno,
                             col=indent + eq + 2)
        col = indent + eq + 2 + (len(stripped[eq + 1:]) - len(value))
        if current is None:
            if key != "format":
                raise ModelError("only 'format' may appear before the first "
                                 f"section, got {key!r}", line=lineno,
                                 col=indent + 1)
            if fmt is not None:
                raise ModelError("duplicate 'format' key", line=lineno,
                                 col=indent + 1)
            fmt = _Entry(value, lineno, col)
            continue
        secname = sections[-1][0]
        if key not in _SECTION_KEYS[secname]:
            raise ModelError(f"unknown key {key!r} in section [{secname}]",
                             line=lineno, col=indent + 1)
        if key in current:
            raise ModelError(f"duplicate key {key!r} in section [{secname}]",
                             line=lineno, col=indent + 1)
        current[key] = _Entry(value, lineno, col)

    if fmt is None:
        raise ModelError("missing 'format = 1' header")
    if _int_of(fmt) != 1:
        raise ModelError(f"unsupported format {fmt.value!r}", line=fmt.line,
                         col=fmt.col)
    return _assemble(sections)


def _int_of(entry: _Entry) -> int:
    try:
        return int(entry.value, 10)
    except ValueError:
        raise ModelError(f"expected an integer, got {entry.value!r}",
                         line=entry.line, col=entry.col) from None


def _float_of(entry: _Entry) -> float:
    try:
        out = float(entry.value)
    except ValueError:
        raise ModelError(f"expected a number, got {entry.value!r}",
                         line=entry.line, col=entry.col) from None
    if not np.isfinite(out):
        raise ModelError(f"number out of range: {entry.value!r}",
                         line=entry.line, col=entry.col)
    return out


def _ident_of(entry: _Entry) -> str:
    if not _IDENT.match(entry.value):
        raise ModelError(f"expected an identifier, got {entry.value!r}",
                         line=entry.line, col=entry.col)
    return entry.value


def _expr_of(entry: _Entry) -> Expr:
    return parse_expr(entry.value, line=entry.line, col0=entry.col)


def _need(sec: dict[str, _Entry], key: str, secname: str, lineno: int) -> _Entry:
    if key not in sec:
        raise ModelError(f"section [{secname}] is missing key {key!r}",
                         line=lineno)
    return sec[key]


def _assemble(sections) -> ModelSpec:
    by_name: dict[str, tuple[int, dict]] = {}
    states_raw: list[tuple[int, dict]] = []
    for name, lineno, content in sections:
        if name == "state":
            states_raw.append((lineno, content))
        else:
            by_name[name] = (lineno, content)
    for required in ("grid", "functional", "metric", "time"):
        if required not in by_name:
            raise ModelError(f"missing required section [{required}]")
    if not 1 <= len(states_raw) <= 2:
        raise ModelError(f"expected one or two [state] sections, found "
                         f"{len(states_raw)}")

    g_line, g = by_name["grid"]
    bc = _ident_of(_need(g, "bc", "grid", g_line))
    grid = GridSection(
        n=_int_of(_need(g, "n", "grid", g_line)),
        length=_float_of(_need(g, "length", "grid", g_line)),
        bc=bc,
        left=_float_of(g["left"]) if "left" in g else None,
        right=_float_of(g["right"]) if "right" in g else None,
    )
    if grid.bc not in ("periodic", "no_flux", "dirichlet"):
        raise ModelError(f"unknown bc {grid.bc!r}", line=g["bc"].line,
                         col=g["bc"].col)
    if grid.n < 3:
        raise ModelError(f"grid needs n >= 3, got {grid.n}",
                         line=g["n"].line, col=g["n"].col)
    if not grid.length > 0:
        raise ModelError("grid length must be positive",
                         line=g["length"].line, col=g["length"].col)
    if grid.bc == "dirichlet" and (grid.left is None or grid.right is None):
        raise ModelError("dirichlet bc needs left and right values", line=g_line)
    if grid.bc != "dirichlet" and (grid.left is not None or grid.right is not None):
        raise ModelError(f"left/right only apply to dirichlet, not {grid.bc!r}",
                         line=g_line)

    states = []
    seen_names = set()
    for s_line, s in states_raw:
        name = _ident_of(_need(s, "name", "state", s_line))
        if name in _RESERVED_NAMES:
            raise ModelError(f"state name {name!r} is reserved",
                             line=s["name"].line, col=s["name"].col)
        if name in seen_names:
            raise ModelError(f"duplicate state name {name!r}",
                             line=s["name"].line, col=s["name"].col)
        seen_names.add(name)
        kind = _ident_of(_need(s, "kind", "state", s_line))
        if kind not in ("conserved", "nonconserved"):
            raise ModelError(f"state kind must be conserved or nonconserved, "
                             f"got {kind!r}", line=s["kind"].line,
                             col=s["kind"].col)
        ic_entry = _need(s, "ic", "state", s_line)
        ic = _expr_of(ic_entry)
        extra = free_names(ic) - {"x"}
        if extra:
            raise ModelError(f"initial condition may only reference x; found "
                             f"{sorted(extra)}", line=ic_entry.line,
                             col=ic_entry.col)
        states.append(StateSection(name=name, kind=kind, ic=ic))

    f_line, f = by_name["functional"]
    variant = _ident_of(_need(f, "variant", "functional", f_line))
    allowed_params = {
        "dirichlet": set(),
        "boltzmann": set(),
        "thermal": {"c_v"},
        "phase_field": {"w", "kappa", "latent_heat", "t_melt", "c_v"},
    }
    if variant not in allowed_params:
        raise ModelError(f"unknown functional variant {variant!r}",
                         line=f["variant"].line, col=f["variant"].col)
    params = {}
    for key, entry in f.items():
        if key == "variant":
            continue
        if key not in allowed_params[variant]:
            raise ModelError(f"parameter {key!r} does not apply to the "
                             f"{variant} functional", line=entry.line,
                             col=entry.col)
        params[key] = _float_of(entry)
    functional = FunctionalSection(variant=variant,
                                   params=tuple(sorted(params.items())))

    m_line, m = by_name["metric"]
    mvariant = _ident_of(_need(m, "variant", "metric", m_line))
    coeff_keys = {"l2m": ({"m"}, {"eta"}), "wasserstein": ({"M"}, {"H"}),
                  "coupled": ({"H_u", "H_c", "H_uc"}, set())}
    if mvariant not in coeff_keys:
        raise ModelError(f"unknown metric variant {mvariant!r}",
                         line=m["variant"].line, col=m["variant"].col)
    state_names = {s.name for s in states}
    coeffs = {}
    face_mean = None
    for key, entry in m.items():
        if key == "variant":
            continue
        if key == "face_mean":
            if mvariant != "wasserstein":
                raise ModelError("face_mean only applies to the wasserstein "
                                 "metric", line=entry.line, col=entry.col)
            face_mean = _ident_of(entry)
            if face_mean not in (ARITHMETIC, LOG_MEAN):
                raise ModelError(f"face_mean must be arithmetic or log_mean, "
                                 f"got {face_mean!r}", line=entry.line,
                                 col=entry.col)
            continue
        primary, alternate = coeff_keys[mvariant]
        if key not in primary | alternate:
            raise ModelError(f"coefficient {key!r} does not apply to the "
                             f"{mvariant} metric", line=entry.line,
                             col=entry.col)
        expr = _expr_of(entry)
        extra = free_names(expr) - {"x"} - state_names
        if extra:
            raise ModelError(f"coefficient references undeclared names "
                             f"{sorted(extra)}", line=entry.line, col=entry.col)
        coeffs[key] = expr
    if mvariant == "l2m":
        if len({"m", "eta"} & coeffs.keys()) != 1:
            raise ModelError("l2m metric needs exactly one of m or eta",
                             line=m_line)
    elif mvariant == "wasserstein":
        if len({"M", "H"} & coeffs.keys()) != 1:
            raise ModelError("wasserstein metric needs exactly one of M or H",
                             line=m_line)
        if face_mean is None:
            face_mean = LOG_MEAN
    else:
        missing = {"H_u", "H_c"} - coeffs.keys()
        if missing:
            raise ModelError(f"coupled metric is missing {sorted(missing)}",
                             line=m_line)
        coeffs.setdefault("H_uc", Num(0.0))
    metric = MetricSection(variant=mvariant,
                           coeffs=tuple(sorted(coeffs.items())),
                           face_mean=face_mean)

    t_line, t = by_name["time"]
    time = TimeSection(
        dt=_float_of(_need(t, "dt", "time", t_line)),
        steps=_int_of(_need(t, "steps", "time", t_line)),
        scheme=_ident_of(_need(t, "scheme", "time", t_line)),
    )
    if not time.dt > 0:
        raise ModelError("dt must be positive", line=t["dt"].line,
                         col=t["dt"].col)
    if time.steps < 0:
        raise ModelError("steps must be >= 0", line=t["steps"].line,
                         col=t["steps"].col)
    if time.scheme not in ("explicit", "semi_implicit"):
        raise ModelError(f"unknown scheme {time.scheme!r}",
                         line=t["scheme"].line, col=t["scheme"].col)

    noise = None
    if "noise" in by_name:
        n_line, nz = by_name["noise"]
        noise = NoiseSection(
            epsilon=_float_of(_need(nz, "epsilon", "noise", n_line)),
            seed=_int_of(_need(nz, "seed", "noise", n_line)),
        )
        if noise.epsilon < 0:
            raise ModelError("epsilon must be >= 0", line=nz["epsilon"].line,
                             col=nz["epsilon"].col)

    spec = ModelSpec(format_version=1, grid=grid, states=tuple(states),
                     functional=functional, metric=metric, time=time,
                     noise=noise)
    _validate_semantics(spec, by_name, states_raw)
    return spec


def _validate_semantics(spec: ModelSpec, by_name, states_raw):
    kinds = [s.kind for s in spec.states]
    mvariant = spec.metric.variant
    m_line = by_name["metric"][0]
    if mvariant == "wasserstein":
        if len(spec.states) != 1 or kinds[0] != "conserved":
            raise ModelError("the wasserstein metric requires exactly one "
                             "conserved state", line=m_line)
        if spec.grid.bc == "dirichlet":
            raise ModelError("the wasserstein metric needs a closed grid "
                             "(periodic or no_flux)", line=m_line)
    elif mvariant == "l2m":
        if len(spec.states) != 1 or kinds[0] != "nonconserved":
            raise ModelError("the l2m metric requires exactly one "
                             "nonconserved state (it does not enforce "
                             "conservation)", line=m_line)
    else:
        if sorted(kinds) != ["conserved", "nonconserved"]:
            raise ModelError("the coupled metric requires one conserved and "
                             "one nonconserved state", line=m_line)
        if spec.grid.bc == "dirichlet":
            raise ModelError("the coupled metric needs a closed grid",
                             line=m_line)

    n_fields = 2 if spec.functional.variant == "phase_field" else 1
    if n_fields != len(spec.states):
        raise ModelError(
            f"the {spec.functional.variant} functional describes {n_fields} "
            f"field(s) but {len(spec.states)} state(s) are declared",
            line=by_name["functional"][0])
    if n_fields == 2 and mvariant != "coupled":
        raise ModelError("phase_field runs need the coupled metric",
                         line=by_name["functional"][0])


# -- canonical serialization ---------------------------------------------------


def serialize_model(spec: ModelSpec) -> str:
    out = ["format = 1", ""]
    out.append("[grid]")
    out.append(f"n = {spec.grid.n}")
    out.append(f"length = {spec.grid.length!r}")
    out.append(f"bc = {spec.grid.bc}")
    if spec.grid.bc == "dirichlet":
        out.append(f"left = {spec.grid.left!r}")
        out.append(f"right = {spec.grid.right!r}")
    for state in spec.states:
        out.append("")
        out.append("[state]")
        out.append(f"name = {state.name}")
        out.append(f"kind = {state.kind}")
        out.append(f"ic = {to_source(state.ic)}")
    out.append("")
    out.append("[functional]")
    out.append(f"variant = {spec.functional.variant}")
    for key, val in spec.functional.params:
        out.append(f"{key} = {val!r}")
    out.append("")
    out.append("[metric]")
    out.append(f"variant = {spec.metric.variant}")
    for key, expr in spec.metric.coeffs:
        out.append(f"{key} = {to_source(expr)}")
    if spec.metric.face_mean is not None:
        out.append(f"face_mean = {spec.metric.face_mean}")
    out.append("")
    out.append("[time]")
    out.append(f"dt = {spec.time.dt!r}")
    out.append(f"steps = {spec.time.steps}")
    out.append(f"scheme = {spec.time.scheme}")
    if spec.noise is not None:
        out.append("")
        out.append("[noise]")
        out.append(f"epsilon = {spec.noise.epsilon!r}")
        out.append(f"seed = {spec.noise.seed}")
    return "\n".join(out) + "\n"


# -- runtime assembly ------------------------------------------------------------


def eval_ic(expr: Expr, grid: Grid1D) -> Field:
    """Evaluate an initial-condition expression at the cell centers."""
    out = evaluate(expr, {"x": grid.cell_centers()})
    vals = np.broadcast_to(np.asarray(out, dtype=float), (grid.n_cells,))
    if not np.isfinite(vals).all():
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise DomainError(f"initial condition is not finite at cell {bad}",
                          index=bad)
    return Field(grid, vals)


@dataclass
class RuntimeModel:
    spec: ModelSpec
    grid: Grid1D
    names: tuple[str, ...]
    initial: tuple[Field, ...]
    functional: object
    metric: object
    dt: float
    steps: int
    scheme: str
    noise: NoiseSection | None
    conserved: dict[str, bool]

    @property
    def initial_state(self):
        return self.initial if len(self.initial) > 1 else self.initial[0]


def _reciprocal_of_twice(expr: Expr) -> Expr:
    return BinOp("/", Num(1.0), BinOp("*", Num(2.0), expr))


def _classify_mobility(expr: Expr, state_name: str, all_names: tuple[str, ...]):
    const = constant_value(expr)
    if const is not None:
        return ConstantMobility(const)
    coeff = linear_coefficient(expr, state_name)
    if coeff is not None:
        return LinearMobility(coeff)
    return ExprMobility(expr, all_names)


def build(spec: ModelSpec) -> RuntimeModel:
    """Assemble runtime objects (grid, fields, functional, metric) from a
    validated model description."""
    grid = Grid1D(n_cells=spec.grid.n, length=spec.grid.length, bc=spec.grid.bc,
                  bc_left=spec.grid.left, bc_right=spec.grid.right)
    states = list(spec.states)
    if spec.metric.variant == "coupled":
        states.sort(key=lambda s: s.kind)  # "conserved" < "nonconserved"
        states.reverse()                   # nonconserved first
    names = tuple(s.name for s in states)
    initial = tuple(eval_ic(s.ic, grid) for s in states)

    fparams = dict(spec.functional.params)
    functional = {
        "dirichlet": lambda: Dirichlet(),
        "boltzmann": lambda: Boltzmann(),
        "thermal": lambda: Thermal(**fparams),
        "phase_field": lambda: PhaseField(**fparams),
    }[spec.functional.variant]()

    coeffs = dict(spec.metric.coeffs)
    if spec.metric.variant == "l2m":
        expr = coeffs["m"] if "m" in coeffs else _reciprocal_of_twice(coeffs["eta"])
        metric = L2Metric(mobility=_classify_mobility(expr, names[0], names),
                          state_name=names[0])
    elif spec.metric.variant == "wasserstein":
        expr = coeffs["M"] if "M" in coeffs else _reciprocal_of_twice(coeffs["H"])
        metric = WassersteinMetric(
            mobility=_classify_mobility(expr, names[0], names),
            face_mean=spec.metric.face_mean, state_name=names[0])
    else:
        def block(expr):
            const = constant_value(expr)
            if const is not None:
                return ConstantMobility(const)
            return ExprMobility(expr, names)
        metric = CoupledMetric(h_u=block(coeffs["H_u"]),
                               h_c=block(coeffs["H_c"]),
                               h_uc=block(coeffs["H_uc"]),
                               state_names=names)

    conserved = {s.name: s.kind == "conserved" for s in states}
    return RuntimeModel(spec=spec, grid=grid, names=names, initial=initial,
                        functional=functional, metric=metric,
                        dt=spec.time.dt, steps=spec.time.steps,
                        scheme=spec.time.scheme, noise=spec.noise,
                        conserved=conserved)


def load_model(path) -> RuntimeModel:
    with open(path, "rb") as fh:
        return build(parse_model(fh.read()))
