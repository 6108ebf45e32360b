import numpy as np


def mixtures_match(a, b, tol=1e-10) -> bool:
    """Compare two mixtures as multisets of (weight, mean, cov) within ``tol``."""
    if a.n_components != b.n_components or list(a.var_names) != list(b.var_names):
        return False
    free = list(range(b.n_components))
    for k in range(a.n_components):
        hit = None
        for j in free:
            if (abs(a.weights[k] - b.weights[j]) <= tol
                    and np.allclose(a.means[k], b.means[j], rtol=0, atol=tol * max(1, np.abs(b.means[j]).max()))
                    and np.allclose(a.covs[k], b.covs[j], rtol=0, atol=tol * max(1, np.abs(b.covs[j]).max()))):
                hit = j
                break
        if hit is None:
            return False
        free.remove(hit)
    return True


# -- random node/input pairs for the distributivity property -----------------

from gmprog.engine import merge_dist, node_semantics  # noqa: E402
from gmprog.frontend import GmLiteral, LinearComb, LinearIneq, Product, VarEq  # noqa: E402
from gmprog.frontend.cfg import AssignPayload, CfgNode, ConditionPayload  # noqa: E402
from gmprog.mixture import GaussianComponent, WeightedDist, make_mixture  # noqa: E402

NAMES = ["a", "b", "c"]
INEQ = ["<", "<=", ">", ">="]


def _spd(rng, d, scale):
    a = rng.normal(size=(d, d))
    return scale * (a @ a.T + 0.3 * np.eye(d))


def random_input(rng) -> WeightedDist:
    C = int(rng.integers(1, 4))
    w = rng.dirichlet(np.ones(C))
    means = rng.normal(size=(C, 3))
    covs = []
    for _ in range(C):
        u = rng.random()
        if u < 0.7:
            covs.append(_spd(rng, 3, 0.5))
        elif u < 0.85:
            covs.append(np.diag([0.0, 1.0, 0.5]))
        else:
            covs.append(np.zeros((3, 3)))
            means[len(covs) - 1, 1] = 0.0  # a point mass that equality tests can hit
    comps = [GaussianComponent(m, c) for m, c in zip(means, covs)]
    return WeightedDist(float(rng.uniform(0.05, 1.0)), make_mixture(NAMES, w, comps))


def random_payload(rng):
    """Return ``(kind, payload, guard)``; ``guard`` is set for branch heads."""
    kind = int(rng.integers(7))
    coef = tuple((float(rng.normal()), n) for n in NAMES)
    if kind == 0:
        return "state", AssignPayload("b", LinearComb(coef, float(rng.normal()))), None
    if kind == 1:
        lit = GmLiteral((0.3, 0.7), (float(rng.normal()), 1.0), (0.5, 0.0))
        return "state", AssignPayload("a", LinearComb(((2.0, "c"), (1.0, "@0")), 0.0), (lit,)), None
    if kind == 2:
        return "state", AssignPayload("c", Product("a", "b")), None
    if kind == 3:
        guard = LinearIneq(coef, float(rng.normal()), str(rng.choice(INEQ)))
        return "state", AssignPayload("a", LinearComb(((1.0, "b"),), 0.5)), guard
    if kind == 4:
        guard = VarEq("b", 0.0, str(rng.choice(["==", "!="])))
        return "state", AssignPayload("c", LinearComb(((1.0, "a"),), 0.0)), guard
    if kind == 5:
        return "observe", ConditionPayload(LinearIneq(coef, float(rng.normal()), str(rng.choice(INEQ)))), None
    value = 0.0 if rng.random() < 0.5 else float(rng.normal())
    return "observe", ConditionPayload(VarEq("b", value, str(rng.choice(["==", "!="])))), None


def distributivity_holds(seed: int) -> bool:
    rng = np.random.default_rng(seed)
    kind, payload, guard = random_payload(rng)
    node = CfgNode(1, kind, payload, True if guard is not None else None, [0], [2])
    inputs = [random_input(rng) for _ in range(int(rng.integers(1, 4)))]
    lhs = node_semantics(node, merge_dist(inputs), guard=guard)
    outs = [node_semantics(node, wd, guard=guard) for wd in inputs]
    if abs(lhs.mass - sum(o.mass for o in outs)) > 1e-12:
        return False
    if lhs.mass == 0:
        return True
    return mixtures_match(lhs.dist, merge_dist(outs).dist, 1e-10)
