"""Weight functions, their positive-part decomposition and admissibility.

A weight V may change sign and may be singular.  Admissibility demands a
declared split of the positive part, V+ = V1 + V2, where V1 has a finite
L^(n/(p*alpha)) norm and V2 satisfies two vanishing-limit conditions:

    |x - y|^(p*alpha) V2(x) -> 0   as x -> y, for every closure point y,
    |x|^(p*alpha) V2(x)    -> 0   as |x| -> infinity.

Limits cannot be certified from samples, so ``check_Ap`` reports sampled
proxy sequences along geometric approaches and classifies each one as
pass (decayed, or still decreasing monotonically), fail (stabilized at a
positive level) or unsettled; the verdict is admissible only when every
proxy passes, and "inconclusive" exists precisely for the unsettled case.

Closed-form weights can be given as expression strings over r = |x| with
log, exp, sqrt, abs, powers and the constants pi and e, e.g.
``"1/(1 + r**2)"`` or ``"exp(-r)/sqrt(r)"``.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .grid import Grid
from .hardy import HardyParams

__all__ = [
    "Weight",
    "ApReport",
    "ProbePlan",
    "check_Ap",
    "example_weight",
    "pointwise_compare",
    "constant_weight",
    "expression_weight",
    "tabulated_weight",
    "scale_weight",
    "perturbed_weight",
]

_EXPR_FUNCS = {"log": np.log, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}
_EXPR_NAMES = {"pi": math.pi, "e": math.e}


def _check_node(node: ast.AST) -> None:
    if isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ValidationError(f"non-numeric constant in weight expression: {node.value!r}")
        return
    if isinstance(node, ast.Name):
        if node.id != "r" and node.id not in _EXPR_NAMES:
            raise ValidationError(f"unknown name {node.id!r} in weight expression (only r, pi, e)")
        return
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
        _check_node(node.left)
        _check_node(node.right)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        _check_node(node.operand)
        return
    if isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _EXPR_FUNCS):
            raise ValidationError("only log/exp/sqrt/abs calls are allowed in weight expressions")
        if node.keywords or len(node.args) != 1:
            raise ValidationError("weight expression functions take exactly one argument")
        _check_node(node.args[0])
        return
    raise ValidationError(f"disallowed syntax in weight expression: {type(node).__name__}")


def _validate_expr(expr: str) -> ast.Expression:
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse weight expression {expr!r}: {exc}") from None
    _check_node(tree.body)
    return tree


def _compile_expr(expr: str) -> Callable[[np.ndarray], np.ndarray]:
    tree = _validate_expr(expr)
    code = compile(tree, "<weight>", "eval")

    def fn(radii: np.ndarray) -> np.ndarray:
        env = {"r": radii, **_EXPR_FUNCS, **_EXPR_NAMES}
        return np.broadcast_to(np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float), radii.shape).copy()

    return fn


def _radii(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords.reshape(-1, 1)
    return np.linalg.norm(coords, axis=1)


@dataclass(frozen=True)
class Weight:
    """Radial weight with a declared positive-part decomposition.

    ``fn``, ``v1`` and ``v2`` map an array of radii to values; V+ must
    equal v1 + v2 away from the declared singular radii, with v1, v2 >= 0.
    The optional exponents record the declared power behavior
    V ~ r^-origin_exponent at 0 and V ~ r^-tail_exponent at infinity.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    v1: Callable[[np.ndarray], np.ndarray]
    v2: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    singular_radii: tuple[float, ...] = ()
    origin_exponent: float | None = None
    tail_exponent: float | None = None

    def eval(self, coords: np.ndarray) -> np.ndarray:
        vals = self.fn(_radii(coords))
        if not np.all(np.isfinite(vals)):
            raise ValidationError(
                f"weight {self.name or '<anonymous>'} evaluated to a non-finite value "
                "(a node sits on a singular point?)"
            )
        return vals

    def eval_v1(self, coords: np.ndarray) -> np.ndarray:
        return self.v1(_radii(coords))

    def eval_v2(self, coords: np.ndarray) -> np.ndarray:
        return self.v2(_radii(coords))

    def positive_part(self, coords: np.ndarray) -> np.ndarray:
        return np.maximum(self.eval(coords), 0.0)

    def negative_part(self, coords: np.ndarray) -> np.ndarray:
        return np.maximum(-self.eval(coords), 0.0)

    def decomposition_defect(self, coords: np.ndarray) -> float:
        """max |V+ - (V1 + V2)| over the given nodes."""
        vp = self.positive_part(coords)
        split = self.eval_v1(coords) + self.eval_v2(coords)
        return float(np.max(np.abs(vp - split))) if len(vp) else 0.0

    def validate_decomposition(self, coords: np.ndarray, tol: float = 1e-12) -> None:
        r = _radii(coords)
        v1 = self.v1(r)
        v2 = self.v2(r)
        if np.any(v1 < -tol) or np.any(v2 < -tol):
            raise ValidationError("decomposition parts V1, V2 must be nonnegative")
        defect = self.decomposition_defect(coords)
        scale = max(1.0, float(np.max(np.abs(self.eval(coords)))))
        if defect > tol * scale:
            raise ValidationError(
                f"declared decomposition violates V+ = V1 + V2 (defect {defect:.3e})"
            )


def constant_weight(value: float = 1.0) -> Weight:
    value = float(value)
    pos = max(value, 0.0)

    return Weight(
        fn=lambda r: np.full_like(r, value),
        v1=lambda r: np.zeros_like(r),
        v2=lambda r: np.full_like(r, pos),
        name=f"constant({value!r})",
    )


def expression_weight(
    expr: str,
    v1_expr: str | None = None,
    v2_expr: str | None = None,
    name: str = "",
    singular_radii: tuple[float, ...] = (),
    origin_exponent: float | None = None,
    tail_exponent: float | None = None,
) -> Weight:
    """Weight from an expression string; defaults to V1 = 0, V2 = V+."""
    fn = _compile_expr(expr)
    if v1_expr is None and v2_expr is None:
        v1 = lambda r: np.zeros_like(r)
        v2 = lambda r: np.maximum(fn(r), 0.0)
    else:
        v1 = _compile_expr(v1_expr) if v1_expr else (lambda r: np.zeros_like(r))
        v2 = _compile_expr(v2_expr) if v2_expr else (lambda r: np.zeros_like(r))
    return Weight(
        fn=fn,
        v1=v1,
        v2=v2,
        name=name or expr,
        singular_radii=singular_radii,
        origin_exponent=origin_exponent,
        tail_exponent=tail_exponent,
    )


def example_weight(name: str, params: HardyParams) -> Weight:
    """The four reference weights W1..W4 (exponent 2*alpha, as stated for p = 2).

    W1 and W2 satisfy the admissibility limits (with V1 = 0, V2 = W);
    W3 fails the decay at infinity and W4 additionally fails the local
    limit at the origin.
    """
    a2 = 2.0 * params.alpha
    an = a2 / params.n
    key = name.strip().upper()
    if key == "W1":
        fn = lambda r: 1.0 / ((1.0 + r ** a2) * np.log(2.0 + r ** a2) ** an)
        return Weight(fn=fn, v1=lambda r: np.zeros_like(r), v2=fn, name="W1",
                      tail_exponent=a2)
    if key == "W2":
        fn = lambda r: 1.0 / (r ** a2 * (1.0 + r ** a2) * np.log(2.0 + r ** (-a2)) ** an)
        return Weight(fn=fn, v1=lambda r: np.zeros_like(r), v2=fn, name="W2",
                      singular_radii=(0.0,), origin_exponent=a2, tail_exponent=2.0 * a2)
    if key == "W3":
        fn = lambda r: 1.0 / (1.0 + r ** a2)
        return Weight(fn=fn, v1=lambda r: np.zeros_like(r), v2=fn, name="W3",
                      tail_exponent=a2)
    if key == "W4":
        fn = lambda r: 1.0 / (r ** a2 * (1.0 + r ** a2))
        return Weight(fn=fn, v1=lambda r: np.zeros_like(r), v2=fn, name="W4",
                      singular_radii=(0.0,), origin_exponent=a2, tail_exponent=2.0 * a2)
    raise ValidationError(f"unknown example weight {name!r} (expected W1..W4)")


def tabulated_weight(radii, values, name: str = "tabulated") -> Weight:
    """Weight from radial samples, piecewise linear in r (V1 = 0, V2 = V+)."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
        raise ValidationError("tabulated weight needs matching 1-d radius/value samples")
    if np.any(np.diff(r) <= 0.0):
        raise ValidationError("tabulated weight needs strictly increasing radii")

    fn = lambda rr: np.interp(rr, r, v)
    return Weight(
        fn=fn,
        v1=lambda rr: np.zeros_like(rr),
        v2=lambda rr: np.maximum(fn(rr), 0.0),
        name=name,
    )


def scale_weight(V: Weight, c: float) -> Weight:
    """c * V with the decomposition scaled along (c > 0)."""
    if c <= 0.0:
        raise ValidationError(f"weight scale must be positive, got {c}")
    return Weight(
        fn=lambda r: c * V.fn(r),
        v1=lambda r: c * V.v1(r),
        v2=lambda r: c * V.v2(r),
        name=f"{c!r}*{V.name}" if V.name else "",
        singular_radii=V.singular_radii,
        origin_exponent=V.origin_exponent,
        tail_exponent=V.tail_exponent,
    )


def perturbed_weight(V: Weight, amplitude: float = 0.5, center: float = 0.5,
                     width: float = 0.15) -> Weight:
    """V plus a nonnegative radial Gaussian bump (joins the V2 part)."""
    if amplitude <= 0.0:
        raise ValidationError("bump amplitude must be positive")

    def bump(r):
        return amplitude * np.exp(-((r - center) / width) ** 2)

    fn = lambda r: V.fn(r) + bump(r)
    return Weight(
        fn=fn,
        v1=V.v1,
        v2=lambda r: np.maximum(fn(r), 0.0) - V.v1(r),
        name=f"{V.name}+bump" if V.name else "bumped",
        singular_radii=V.singular_radii,
        origin_exponent=V.origin_exponent,
        tail_exponent=V.tail_exponent,
    )


@dataclass(frozen=True)
class ProbePlan:
    """Sampling plan for the admissibility proxies."""

    n_local_targets: int = 6      # interior nodes probed as local limit points
    n_steps: int = 44             # length of each geometric sequence
    shrink: float = 0.5
    start_scale: float | None = None   # first offset; defaults to one cell diameter
    unbounded_domain: bool = False     # probe the decay at infinity as well
    max_tail_exponent: int = 40        # largest probed radius is 2^this
    seed: int = 0


@dataclass(frozen=True)
class ApReport:
    """Outcome of the sampled admissibility proxies."""

    v1_ok: bool
    local_ok: bool
    tail_ok: bool
    verdict: str                       # admissible | inadmissible | inconclusive
    positive_part_present: bool
    local_sequences: dict
    tail_sequence: np.ndarray | None
    local_suprema: dict
    tail_supremum: float | None
    v1_norm_ratio: float | None
    notes: tuple[str, ...] = ()


def _classify(seq: np.ndarray) -> str:
    """pass / fail / unsettled for one proxy sequence approaching a limit."""
    seq = np.asarray(seq, dtype=float)
    peak = float(np.max(seq))
    if peak <= 0.0:
        return "pass"
    tail = seq[-5:]
    tail_max = float(np.max(tail))
    if tail_max <= max(1e-12, 1e-3 * peak):
        return "pass"
    spread = (float(np.max(tail)) - float(np.min(tail))) / tail_max
    if spread < 0.02:
        return "fail"          # stabilized at a positive level
    half = len(seq) // 2
    if bool(np.all(np.diff(seq[half:]) >= -1e-9 * peak)) and seq[-1] >= peak * (1.0 - 1e-9) \
            and seq[-1] >= 10.0 * float(np.median(seq)):
        return "fail"          # still growing at the end: diverging limit
    decreasing = bool(np.all(np.diff(seq[half:]) <= 1e-9 * peak))
    if decreasing:
        return "pass"          # still decaying (slow logarithmic limits land here)
    return "unsettled"


def check_Ap(V: Weight, params: HardyParams, grid: Grid, probe: ProbePlan | None = None) -> ApReport:
    """Sampled verdict on the admissibility condition for ``V``.

    Evaluates |x - y|^(p*alpha) V2(x) along geometric approaches to probe
    points (a spread of grid nodes plus the declared singular radii) and,
    for unbounded domains, |x|^(p*alpha) V2(x) along dyadic radii.  The V1
    part is proxied by stability of its discrete L^(n/(p*alpha)) norm
    under one grid refinement.
    """
    probe = probe or ProbePlan()
    pa = params.p_alpha
    notes: list[str] = []

    vals = V.eval(grid.interior_coords)
    positive_present = bool(np.any(vals > 0.0))
    if not positive_present:
        notes.append("V+ vanishes on every interior node")

    try:
        V.validate_decomposition(grid.interior_coords)
    except ValidationError as exc:
        raise ValidationError(f"admissibility check needs a valid decomposition: {exc}") from None

    # local limits ------------------------------------------------------
    rng = np.random.default_rng(probe.seed)
    n_int = grid.n_interior
    take = min(probe.n_local_targets, n_int)
    idx = np.sort(rng.choice(n_int, size=take, replace=False))
    targets = [("node", float(r)) for r in grid.radii("interior")[idx]]
    targets += [("singular", float(s)) for s in V.singular_radii]

    start = probe.start_scale if probe.start_scale is not None else grid.cell_diameter
    steps = start * probe.shrink ** np.arange(probe.n_steps)

    local_sequences: dict = {}
    local_suprema: dict = {}
    local_states = []
    for kind, ry in targets:
        # approach along the radial line; |x - y| = offset with |x| = ry + offset
        radii_out = ry + steps
        seq = steps ** pa * V.v2(radii_out)
        if ry > 0.0:
            radii_in = np.maximum(ry - steps, 1e-300)
            mask = ry - steps > 0
            seq_in = np.where(mask, steps ** pa * V.v2(radii_in), 0.0)
            seq = np.maximum(seq, seq_in)
        if not np.all(np.isfinite(seq)):
            raise ValidationError(f"V2 evaluation failed probing limit point r={ry}")
        key = f"{kind}:r={ry!r}"
        local_sequences[key] = seq
        local_suprema[key] = float(np.max(seq))
        local_states.append(_classify(seq))

    # decay at infinity ---------------------------------------------------
    tail_sequence = None
    tail_supremum = None
    if probe.unbounded_domain:
        radii = 2.0 ** np.arange(0, probe.max_tail_exponent + 1)
        tail_sequence = radii ** pa * V.v2(radii)
        if not np.all(np.isfinite(tail_sequence)):
            raise ValidationError("V2 evaluation failed along the dyadic tail radii")
        tail_supremum = float(np.max(tail_sequence))
        tail_state = _classify(tail_sequence)
    else:
        tail_state = "pass"
        notes.append("tail limit vacuous on a bounded domain")

    # V1 integrability proxy ----------------------------------------------
    q = params.n / pa
    v1_vals = V.eval_v1(grid.interior_coords)
    v1_ratio = None
    if np.max(np.abs(v1_vals)) == 0.0:
        v1_state = "pass"
        notes.append("V1 identically zero on the grid")
    else:
        fine = grid.refined()
        norm_c = float(np.sum(grid.interior_weights * np.abs(v1_vals) ** q) ** (1.0 / q))
        v1_fine = V.eval_v1(fine.interior_coords)
        norm_f = float(np.sum(fine.interior_weights * np.abs(v1_fine) ** q) ** (1.0 / q))
        v1_ratio = norm_f / norm_c if norm_c > 0 else np.inf
        v1_state = "pass" if abs(v1_ratio - 1.0) <= 0.10 else "unsettled"

    local_ok = all(s == "pass" for s in local_states)
    tail_ok = tail_state == "pass"
    v1_ok = v1_state == "pass"

    states = local_states + [tail_state, v1_state]
    if not positive_present or "fail" in states:
        verdict = "inadmissible"
    elif all(s == "pass" for s in states):
        verdict = "admissible"
    else:
        verdict = "inconclusive"

    return ApReport(
        v1_ok=v1_ok,
        local_ok=local_ok,
        tail_ok=tail_ok,
        verdict=verdict,
        positive_part_present=positive_present,
        local_sequences=local_sequences,
        tail_sequence=tail_sequence,
        local_suprema=local_suprema,
        tail_supremum=tail_supremum,
        v1_norm_ratio=v1_ratio,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class OrderingReport:
    ordered: bool                     # V_small <= V_big at every interior node
    strict_node_count: int
    strict_on_positive_measure: bool
    max_violation: float


def pointwise_compare(V_small: Weight, V_big: Weight, grid: Grid) -> OrderingReport:
    """Nodewise ordering of two weights on the interior of ``grid``."""
    a = V_small.eval(grid.interior_coords)
    b = V_big.eval(grid.interior_coords)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    viol = float(np.max(a - b, initial=0.0))
    ordered = bool(np.all(a <= b + tol))
    strict = int(np.sum(b > a + tol))
    return OrderingReport(
        ordered=ordered,
        strict_node_count=strict,
        strict_on_positive_measure=ordered and strict >= 1,
        max_violation=max(viol, 0.0),
    )
