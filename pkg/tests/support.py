"""Independent oracles and generators shared across test modules.

Everything here recomputes expected values from first principles (explicit
closures, leaf enumeration, finite differences, first-order iterations,
grid search) so library results are checked against a second route.
"""

import math

import numpy as np

from stlcbf import formulas as fm
from stlcbf.barrier import EMPTY_HISTORY, GammaFn, build_bf_tree, eval_all
from stlcbf.predicates import affine, ball2


# ---------------------------------------------------------------------------
# Random in-fragment scenario trees over a 2-D state


def random_tree(rng, max_temporal=4, max_leaves=6, t1=0.0):
    """Random temporal-stratum formula plus matching funnels, compiled.

    Returns (tree, leaf_predicates).  Structure: a root conjunction or
    disjunction over 1..max_temporal temporal operators, each wrapping a
    predicate or a small boolean combination of planar discs / half-planes.
    """
    dim = 2
    counter = [0]

    def fresh_pred():
        counter[0] += 1
        name = f"h{counter[0]}"
        if rng.random() < 0.7:
            center = rng.uniform(-4, 4, size=2)
            radius = rng.uniform(1.5, 5.0)
            return ball2(name, center=center, radius=radius, dim=dim)
        coeffs = rng.uniform(-1, 1, size=2)
        if abs(coeffs).max() < 0.1:
            coeffs[0] = 1.0
        return affine(name, coeffs=coeffs, offset=rng.uniform(0, 5), dim=dim)

    def psi(depth=0):
        if depth >= 1 or rng.random() < 0.5 or counter[0] >= max_leaves - 1:
            return fm.Pred("", fresh_pred())
        ctor = fm.And if rng.random() < 0.5 else fm.Or
        return ctor((psi(depth + 1), psi(depth + 1)))

    n_temporal = int(rng.integers(1, max_temporal + 1))
    gammas = []
    parts = []
    for _ in range(n_temporal):
        a = float(np.round(rng.uniform(0, 6), 2))
        b = a + float(np.round(rng.uniform(2, 8), 2))
        child = psi()
        if rng.random() < 0.5:
            parts.append(fm.Eventually(a, b, child))
            gammas.append(GammaFn(
                gamma_zero=float(rng.uniform(1, 30)),
                gamma_inf=-float(rng.uniform(0.5, 5)),
                t_star=b,
                t1=t1,
                shape="smooth_clamp",
            ))
        else:
            parts.append(fm.Always(a, b, child))
            if a > t1 + 0.05:
                # positive slack before the window, flat and nonpositive inside
                gammas.append(GammaFn(
                    gamma_zero=float(rng.uniform(0, 20)),
                    gamma_inf=-float(rng.uniform(0.5, 3)),
                    t_star=a,
                    t1=t1,
                    shape="smooth_clamp",
                ))
            else:
                # window starts immediately: stay nonpositive from t1 on
                gammas.append(GammaFn(
                    gamma_zero=0.0,
                    gamma_inf=-float(rng.uniform(0.5, 3)),
                    t_star=b,
                    t1=t1,
                ))
    if n_temporal == 1:
        formula = parts[0]
    else:
        formula = fm.And(tuple(parts)) if rng.random() < 0.6 else fm.Or(tuple(parts))

    # bind leaf names to the generated predicates
    def rebind(node):
        if isinstance(node, fm.Pred):
            return fm.Pred(node.binding.name, node.binding)
        if isinstance(node, fm.And):
            return fm.And(tuple(rebind(c) for c in node.children))
        if isinstance(node, fm.Or):
            return fm.Or(tuple(rebind(c) for c in node.children))
        if isinstance(node, fm.Eventually):
            return fm.Eventually(node.a, node.b, rebind(node.child))
        if isinstance(node, fm.Always):
            return fm.Always(node.a, node.b, rebind(node.child))
        return node

    formula = rebind(formula)
    tree = build_bf_tree(formula, gammas, t1=t1)
    preds = [tree.nodes[k].pred for k in tree.elementary]
    return tree, preds


# ---------------------------------------------------------------------------
# Leaf-enumeration oracle for activity and composition values


def brute_force_leaf_table(tree, t, x, hist=EMPTY_HISTORY):
    """(leaf id -> branch value) for leaves reachable through qualified links.

    Walks parent chains directly, re-deriving qualification from betas and
    the history record rather than calling the library's set machinery.
    """
    betas = _oracle_betas(tree, hist)
    table = {}
    for k in tree.elementary:
        value = tree.nodes[k].pred.eval(x)
        node = k
        ok = True
        while True:
            parent = tree.nodes[node].parent
            if parent is None:
                break
            pnode = tree.nodes[parent]
            if pnode.kind == "min" and t > betas[node]:
                ok = False
                break
            if pnode.kind == "max" and node in hist.disqualified.get(parent, frozenset()):
                ok = False
                break
            if pnode.gamma is not None:
                value += pnode.gamma(t)
            node = parent
        if ok:
            table[k] = value
    return table


def _oracle_betas(tree, hist):
    out = {}
    for nid in tree.postorder:
        node = tree.nodes[nid]
        if node.kind == "elementary":
            out[nid] = math.inf
        elif node.kind in ("eventually", "always"):
            out[nid] = node.beta
        elif node.kind == "min":
            out[nid] = max(out[c] for c in node.children)
        else:
            disq = hist.disqualified.get(nid, frozenset())
            alive = [out[c] for c in node.children if c not in disq]
            out[nid] = min(alive) if alive else 0.0
    return out


def brute_force_b0(tree, t, x, hist=EMPTY_HISTORY):
    """Root value recomputed by direct recursion over the tree structure."""
    betas = _oracle_betas(tree, hist)

    def rec(nid):
        node = tree.nodes[nid]
        if node.kind == "elementary":
            return node.pred.eval(x)
        if node.kind == "min":
            vals = [rec(c) for c in node.children if t <= betas[c]]
            return min(vals) if vals else 0.0
        if node.kind == "max":
            disq = hist.disqualified.get(nid, frozenset())
            vals = [rec(c) for c in node.children if c not in disq]
            if not vals or t > betas[nid]:
                return 0.0
            return max(vals)
        if t > node.beta:
            return 0.0
        return rec(node.children[0]) + node.gamma(t)

    return rec(tree.root)


# ---------------------------------------------------------------------------
# Numerical directional derivative of the nonsmooth root value


def directional_derivative(tree, hist, t, x, xdot, delta=1e-6):
    """Right-sided derivative of b0 along (1, xdot), by one-sided differencing."""
    v0 = eval_all(tree, t, x, hist)[tree.root]
    v1 = eval_all(tree, t + delta, x + delta * np.asarray(xdot), hist)[tree.root]
    return (v1 - v0) / delta


# ---------------------------------------------------------------------------
# First-order QP oracle: projected gradient ascent on the dual


def qp_dual_projected_gradient(Q, A, c, max_iter=200_000, tol=1e-12):
    """Solve min u'Qu s.t. Au >= c via accelerated projected gradient on the dual.

    The dual of the strictly convex program is
    max_{lam >= 0} -(1/4) lam' A Q^-1 A' lam + c' lam, whose projection step
    is a clip at zero.  Returns the primal point u = (1/2) Q^-1 A' lam.
    Only meaningful for feasible problems.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if A.shape[0] == 0:
        return np.zeros(Q.shape[0])
    Qinv_At = np.linalg.solve(Q, A.T)
    M = 0.5 * A @ Qinv_At
    lip = max(np.linalg.eigvalsh(M).max(), 1e-12)
    step = 1.0 / lip
    lam = np.zeros(A.shape[0])
    y = lam.copy()
    t_acc = 1.0
    for _ in range(max_iter):
        grad = c - M @ y
        lam_next = np.maximum(0.0, y + step * grad)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = lam_next + ((t_acc - 1.0) / t_next) * (lam_next - lam)
        if np.max(np.abs(lam_next - lam)) <= tol * (1.0 + np.max(np.abs(lam_next))):
            lam = lam_next
            break
        lam, t_acc = lam_next, t_next
    return 0.5 * (Qinv_At @ lam)


# ---------------------------------------------------------------------------
# Grid-search minimizer of u'Qu under a feasibility oracle


def grid_search_input(objective_Q, feasible, lo, hi, stages=10, points=25):
    """Refine a grid over the box [lo, hi]^m keeping the best feasible point.

    ``feasible(u)`` is a black-box predicate.  Each stage shrinks the box
    around the incumbent; the window spans four grid steps per side so an
    incumbent sitting off-center in a flat objective valley cannot push
    the true minimizer out of the next window.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m = len(lo)
    best = None
    best_obj = math.inf
    cur_lo, cur_hi = lo.copy(), hi.copy()
    for _ in range(stages):
        axes = [np.linspace(cur_lo[i], cur_hi[i], points) for i in range(m)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
        objs = np.einsum("ij,jk,ik->i", mesh, objective_Q, mesh)
        for idx in np.argsort(objs):
            obj = float(objs[idx])
            if best is not None and obj >= best_obj:
                break
            if feasible(mesh[idx]):
                best, best_obj = mesh[idx], obj
                break
        center = best if best is not None else 0.5 * (cur_lo + cur_hi)
        span = (cur_hi - cur_lo) / (points - 1)
        cur_lo = center - 4.0 * span
        cur_hi = center + 4.0 * span
    return best, best_obj
