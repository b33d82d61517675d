"""Named map families and the map-fixture formats used in configs.

A map can be written in a config as a call expression such as
``"depolarizing(0.2)"`` or ``"kraus_scaled(0.7, amplitude_damping(0.4))"``,
or as a JSON object ``{"dim": D, "kraus": [...]}`` / ``{"dim": D, "superop": M}``
with matrix literals given as rows of ``[re, im]`` pairs.
"""

import ast

import numpy as np

from .errors import UsageError
from .maps import PositiveMap, identity_map, random_kraus_map, scaled
from .matrices import matrix_from_json, matrix_to_json


def weyl_operators(dim):
    """The D^2 clock-and-shift unitaries X^a Z^b, identity first."""
    omega = np.exp(2j * np.pi / dim)
    shift = np.roll(np.eye(dim), 1, axis=0)
    clock = np.diag(omega ** np.arange(dim))
    ops = []
    for a in range(dim):
        for b in range(dim):
            ops.append(np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b))
    return np.array(ops, dtype=complex)


def depolarizing(p, dim=2):
    """X -> (1 - p) X + p tr(X) I / D, as D^2 Weyl-Kraus operators."""
    if not 0 <= p <= 1:
        raise UsageError("depolarizing parameter must lie in [0, 1]")
    W = weyl_operators(dim)
    weights = np.full(dim * dim, p / dim**2)
    weights[0] += 1 - p
    keep = weights > 0
    return PositiveMap(dim, kraus=np.sqrt(weights[keep])[:, None, None] * W[keep], label=f"depolarizing({p:g})")


def amplitude_damping(gamma, dim=2):
    if dim != 2:
        raise UsageError("amplitude_damping is a qubit channel")
    if not 0 <= gamma <= 1:
        raise UsageError("damping parameter must lie in [0, 1]")
    K0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    K1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return PositiveMap(2, kraus=np.stack([K0, K1]), label=f"amplitude_damping({gamma:g})")


def kraus_scaled(c, base, dim=2):
    return scaled(base, c, label=f"kraus_scaled({c:g}, {base.label})")


def random_cp(rank, seed, dim=2):
    """Random quantum channel with ``rank`` Kraus operators (seeded)."""
    rng = np.random.default_rng(seed)
    return random_kraus_map(rng, dim, rank, trace_preserving=True, label=f"random_cp({rank}, {seed})")


def diag_kraus(*entries, dim=None):
    """Single-Kraus map X -> K X K* with K = diag(entries)."""
    K = np.diag(np.asarray(entries, dtype=complex))
    return PositiveMap(len(entries), kraus=K[None], label="diag_kraus(" + ", ".join(f"{e:g}" for e in entries) + ")")


def pauli(axis, dim=2):
    """Conjugation by a Pauli matrix, X -> s X s."""
    mats = {
        "x": [[0, 1], [1, 0]],
        "y": [[0, -1j], [1j, 0]],
        "z": [[1, 0], [0, -1]],
    }
    if axis not in mats:
        raise UsageError(f"unknown Pauli axis {axis!r}")
    return PositiveMap(2, kraus=np.array(mats[axis], dtype=complex)[None], label=f"pauli({axis})")


def identity(dim=2):
    return identity_map(dim)


FAMILIES = {
    "depolarizing": depolarizing,
    "amplitude_damping": amplitude_damping,
    "kraus_scaled": kraus_scaled,
    "random_cp": random_cp,
    "diag_kraus": diag_kraus,
    "pauli": pauli,
    "identity": identity,
}


def parse_map(expr, dim=2):
    """Build a map from a family expression like ``"kraus_scaled(2, depolarizing(0.5))"``."""
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"cannot parse map expression {expr!r}") from exc
    phi = _eval_node(tree.body, dim, expr)
    if not isinstance(phi, PositiveMap):
        raise UsageError(f"{expr!r} does not describe a map")
    phi_label = expr.strip()
    object.__setattr__(phi, "label", phi_label)
    return phi


def _eval_node(node, dim, expr):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, str)):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return -_eval_node(node.operand, dim, expr)
    if isinstance(node, ast.Name) and node.id in FAMILIES:
        return FAMILIES[node.id](dim=dim)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        name = node.func.id
        if name not in FAMILIES:
            raise UsageError(f"unknown map family {name!r} in {expr!r}")
        args = [_eval_node(a, dim, expr) for a in node.args]
        kwargs = {kw.arg: _eval_node(kw.value, dim, expr) for kw in node.keywords}
        if name == "diag_kraus":
            return diag_kraus(*args)
        kwargs.setdefault("dim", dim)
        try:
            return FAMILIES[name](*args, **kwargs)
        except TypeError as exc:
            raise UsageError(f"bad arguments in {expr!r}: {exc}") from exc
    raise UsageError(f"unsupported syntax in map expression {expr!r}")


def map_from_json(obj, dim=2):
    """Map from a family expression string or a ``kraus``/``superop`` fixture."""
    if isinstance(obj, str):
        return parse_map(obj, dim)
    if not isinstance(obj, dict):
        raise UsageError(f"map fixture must be a string or object, got {type(obj).__name__}")
    unknown = set(obj) - {"dim", "kraus", "superop", "label"}
    if unknown:
        raise UsageError(f"unknown map fixture keys {sorted(unknown)}")
    D = int(obj.get("dim", dim))
    label = obj.get("label", "fixture")
    if "kraus" in obj and "superop" in obj:
        raise UsageError("map fixture has both kraus and superop")
    if "kraus" in obj:
        K = np.stack([matrix_from_json(m) for m in obj["kraus"]])
        return PositiveMap(D, kraus=K, label=label)
    if "superop" in obj:
        return PositiveMap(D, superop=matrix_from_json(obj["superop"]), label=label)
    raise UsageError("map fixture needs kraus or superop")


def map_to_json(phi):
    if phi.is_kraus:
        return {"dim": phi.dim, "kraus": [matrix_to_json(K) for K in phi.kraus], "label": phi.label}
    return {"dim": phi.dim, "superop": matrix_to_json(phi.superop), "label": phi.label}
