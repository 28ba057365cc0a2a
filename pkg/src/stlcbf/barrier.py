"""Barrier-function trees for two-strata temporal logic tasks.

A task formula compiles into a tree of barrier nodes.  Leaves evaluate
predicate functions h_k(x).  Boolean-layer conjunctions and disjunctions
become pointwise min / max nodes.  Each temporal operator wraps its child
as (b_child(t,x) + gamma(t)) * step(t <= beta), where gamma is a C1 time
funnel shaping when the child constraint must hold and beta is the node's
deactivation time:

- eventually on [a,b]:  gamma must dip <= 0 somewhere in [a,b]; beta is the
  first time gamma reaches 0, after which the node stops constraining.
- always on [a,b]:      gamma <= 0 on all of [a,b]; beta = b.
- temporal conjunction: min over children not yet deactivated
  (min over the empty set is 0); beta = max of the children's beta.
- temporal disjunction: max over children that have stayed nonnegative so
  far along the trajectory (runtime history state; disqualification is
  permanent), multiplied by step(t <= beta); beta = min over the qualified
  children's beta (0 when none remain, i.e. max over the empty set is 0).

The root value b0(t,x) is continuous and piecewise C1 in x; along any
fixed x it can only jump upward at deactivation times before the horizon.
For each leaf k reachable through qualified links, the branch value
b0^k(t,x) = h_k(x) + sum of gamma over the branch is smooth and agrees
with b0 wherever k attains the min/max composition; switching functions
s_kl separate the state-space sections where different leaves attain it.

Trees and index sets are immutable after construction; evaluation is pure
given a History snapshot.  History has a single-writer contract (the
simulation loop); concurrent readers are safe between writes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import formulas as fm
from .predicates import Predicate, constant

__all__ = [
    "GammaFn",
    "NodeKind",
    "BfNode",
    "BfTree",
    "History",
    "EMPTY_HISTORY",
    "IndexSets",
    "TreeError",
    "GammaFeasibilityError",
    "HistoryError",
    "build_bf_tree",
    "eval_all",
    "eval_node",
    "node_beta",
    "qualified_children",
    "path_set",
    "active_sets",
    "eval_bk",
    "branch_triple",
    "switch_fn",
    "update_history",
]

INF = math.inf


class TreeError(ValueError):
    """Structural errors: unknown ids, non-temporal formulas, broken paths."""


class GammaFeasibilityError(TreeError):
    """A time funnel violates the eventually/always feasibility conditions."""


class HistoryError(ValueError):
    """History updated with a time earlier than the last update."""


# ---------------------------------------------------------------------------
# Time funnels


def _bisect_first_nonpositive(g, lo: float, hi: float, tol: float = 1e-12) -> float | None:
    """First t in [lo, hi] with g(t) <= 0, located by scan plus bisection.

    Returns None when g > 0 on the whole interval (up to the scan grid).
    """
    if g(lo) <= 0.0:
        return lo
    cells = 1024
    prev = lo
    for i in range(1, cells + 1):
        t = lo + (hi - lo) * i / cells
        if g(t) <= 0.0:
            a, b = prev, t
            while b - a > tol:
                mid = 0.5 * (a + b)
                if g(mid) <= 0.0:
                    b = mid
                else:
                    a = mid
            return b
        prev = t
    return None


@dataclass(frozen=True)
class GammaFn:
    """C1 time funnel, parameterized by its value at t1 and its target.

    Shapes:

    - ``affine``:       straight line from (t1, gamma_zero) through
                        (t_star, gamma_inf), continuing with the same slope.
    - ``affine_clamp``: same line, held constant at gamma_inf after t_star.
                        The kink at t_star breaks C1, so trees only accept
                        it when t_star is at or past the horizon.
    - ``smooth_clamp``: quadratic ease-out reaching gamma_inf with zero
                        slope at t_star, constant afterwards; C1 everywhere.
                        Use this when a window sits far from t1 and an
                        affine tail would over-tighten it.
    - ``smoothstep``:   constant gamma_zero before t1, cubic ease-in/out
                        down to gamma_inf at t_star, constant afterwards;
                        C1 everywhere with peak rate 1.5 * drop / span.
                        Use this for obligations that should stay slack
                        until a release time well after the run starts.
    """

    gamma_zero: float
    gamma_inf: float
    t_star: float
    t1: float = 0.0
    shape: str = "affine"

    def __post_init__(self):
        if self.t_star <= self.t1:
            raise ValueError(f"t_star ({self.t_star:g}) must exceed t1 ({self.t1:g})")
        if self.shape not in ("affine", "affine_clamp", "smooth_clamp", "smoothstep"):
            raise ValueError(f"unknown gamma shape {self.shape!r}")

    @property
    def slope(self) -> float:
        return (self.gamma_inf - self.gamma_zero) / (self.t_star - self.t1)

    def __call__(self, t: float) -> float:
        if self.shape == "affine":
            return self.gamma_zero + self.slope * (t - self.t1)
        if t >= self.t_star:
            return self.gamma_inf
        if self.shape == "affine_clamp":
            return self.gamma_zero + self.slope * (t - self.t1)
        w = (self.t_star - t) / (self.t_star - self.t1)
        if self.shape == "smooth_clamp":
            return self.gamma_inf + (self.gamma_zero - self.gamma_inf) * w * w
        if w >= 1.0:
            return self.gamma_zero
        s = 3.0 * w * w - 2.0 * w * w * w
        return self.gamma_inf + (self.gamma_zero - self.gamma_inf) * s

    def deriv(self, t: float) -> float:
        """Left-sided time derivative (the two sides differ only at clamp kinks)."""
        if self.shape == "affine":
            return self.slope
        if t > self.t_star:
            return 0.0
        if self.shape == "affine_clamp":
            return self.slope
        span = self.t_star - self.t1
        w = (self.t_star - t) / span
        if self.shape == "smooth_clamp":
            return -2.0 * (self.gamma_zero - self.gamma_inf) * w / span
        if w >= 1.0:
            return 0.0
        return -6.0 * (self.gamma_zero - self.gamma_inf) * w * (1.0 - w) / span

    def max_neg_deriv(self, lo: float, hi: float) -> float:
        """max over [lo, hi] of -d(gamma)/dt, exact for the closed-form shapes."""
        if hi < lo:
            raise ValueError("empty interval")
        if self.shape == "affine":
            return -self.slope
        if self.shape == "affine_clamp":
            cands = []
            if lo < self.t_star:
                cands.append(-self.slope)
            if hi >= self.t_star:
                cands.append(0.0)
            return max(cands)
        if self.shape == "smooth_clamp":
            # -deriv decreases linearly to 0 at t_star
            cands = [-self.deriv(min(lo, self.t_star)), -self.deriv(min(hi, self.t_star))]
            if hi >= self.t_star:
                cands.append(0.0)
            return max(cands)
        # smoothstep: -deriv peaks midway through the descent
        t_mid = 0.5 * (self.t1 + self.t_star)
        cands = [-self.deriv(max(lo, self.t1)), -self.deriv(min(hi, self.t_star))]
        if lo <= t_mid <= hi:
            cands.append(-self.deriv(t_mid))
        if hi >= self.t_star or lo <= self.t1:
            cands.append(0.0)
        return max(cands)

    def first_nonpositive(self, lo: float, hi: float) -> float | None:
        """First time in [lo, hi] with gamma <= 0.

        Closed form for the affine shape; scan-plus-bisection (1e-12
        absolute) for the clamped and smoothstep shapes.
        """
        if hi < lo:
            return None
        if self.shape == "affine":
            if self(lo) <= 0.0:
                return lo
            if self.slope >= 0.0:
                return None
            root = self.t1 - self.gamma_zero / self.slope
            return root if lo <= root <= hi else None
        return _bisect_first_nonpositive(self, lo, hi)


# ---------------------------------------------------------------------------
# Tree types


class NodeKind:
    ELEMENTARY = "elementary"
    MIN = "min"
    MAX = "max"
    TEMPORAL_F = "eventually"
    TEMPORAL_G = "always"


@dataclass(frozen=True)
class BfNode:
    id: str
    kind: str
    stratum: fm.Stratum
    children: tuple[str, ...]
    parent: str | None
    pred: Predicate | None = None
    gamma: GammaFn | None = None
    beta: float = INF                      # static value; disjunction betas move with history
    interval: tuple[float, float] | None = None


@dataclass(frozen=True)
class History:
    """Permanent disqualifications of temporal-disjunction children.

    Maps a disjunction node id to the set of children observed negative at
    some past sample.  Once disqualified, a child never re-enters.
    """

    disqualified: Mapping[str, frozenset[str]] = field(default_factory=dict)
    last_time: float = -INF


EMPTY_HISTORY = History()


@dataclass(frozen=True)
class BfTree:
    nodes: Mapping[str, BfNode]
    root: str
    horizon: float                         # b0 == 0 for t > horizon (empty history;
    t1: float                              # disqualification can extend a disjunction)
    postorder: tuple[str, ...]
    elementary: tuple[str, ...]            # leaf ids in formula order
    formula: fm.Formula = field(compare=False)

    def node(self, node_id: str) -> BfNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TreeError(f"unknown node id {node_id!r}") from None

    def gamma_value(self, node_id: str, t: float) -> float:
        g = self.node(node_id).gamma
        return g(t) if g is not None else 0.0

    def gamma_deriv(self, node_id: str, t: float) -> float:
        g = self.node(node_id).gamma
        return g.deriv(t) if g is not None else 0.0


@dataclass(frozen=True)
class IndexSets:
    """Snapshot of the activity structure at one (t, x, history).

    - ``qualified``:          children currently entering each composition.
    - ``active``:             children attaining each node's value within tol.
    - ``active_elementary``:  leaves attaining each node's value through a
                              qualified branch, within tol.
    - ``root_paths``:         ordered root-to-leaf id paths for every leaf
                              reachable through qualified links.
    - ``values``:             all node values at (t, x).
    """

    qualified: Mapping[str, frozenset[str]]
    active: Mapping[str, frozenset[str]]
    active_elementary: Mapping[str, frozenset[str]]
    root_paths: Mapping[str, tuple[str, ...]]
    values: Mapping[str, float]
    tol: float


# ---------------------------------------------------------------------------
# Construction


def _unique_leaf_id(name: str, used: set[str]) -> str:
    if name not in used:
        return name
    k = 2
    while f"{name}#{k}" in used:
        k += 1
    return f"{name}#{k}"


def build_bf_tree(
    formula: fm.Formula,
    gamma_cfg: Sequence[GammaFn] | Mapping[int, GammaFn],
    t1: float = 0.0,
) -> BfTree:
    """Compile a temporal-stratum, until-free formula into a barrier tree.

    ``gamma_cfg`` supplies one GammaFn per temporal operator, indexed in
    depth-first order.  Construction validates funnel feasibility: an
    eventually funnel must reach 0 within its window's deadline and an
    always funnel must be nonpositive across its window.  Raises
    GammaFeasibilityError / TreeError accordingly.

    Boolean-layer formulas are accepted too and compile to min/max trees
    with no deactivations (the constraint never expires; the horizon is
    infinite).
    """
    fm.stratum_of(formula)  # rejects out-of-fragment shapes
    if any(isinstance(n, fm.Until) for n in fm.iter_nodes(formula)):
        raise TreeError("formula contains until; rewrite it first (desugar_until)")

    if isinstance(gamma_cfg, Mapping):
        n_cfg = None
        gamma_at = lambda i: gamma_cfg.get(i)
    else:
        seq = list(gamma_cfg)
        n_cfg = len(seq)
        gamma_at = lambda i: seq[i] if i < len(seq) else None

    nodes: dict[str, BfNode] = {}
    used_leaf_ids: set[str] = set()
    elementary: list[str] = []
    temporal_counter = [0]

    def add_leaf(pred: Predicate, parent: str | None) -> str:
        nid = _unique_leaf_id(pred.name, used_leaf_ids)
        used_leaf_ids.add(nid)
        nodes[nid] = BfNode(nid, NodeKind.ELEMENTARY, fm.Stratum.PSI, (), parent, pred=pred)
        elementary.append(nid)
        return nid

    def build(node: fm.Formula, nid: str, parent: str | None) -> str:
        if isinstance(node, fm.TrueNode):
            return add_leaf(constant("true", 1.0), parent)
        if isinstance(node, fm.Pred):
            if node.binding is None:
                raise TreeError(f"predicate {node.name!r} has no bound function")
            return add_leaf(node.binding, parent)
        if isinstance(node, (fm.And, fm.Or)):
            stratum = fm.stratum_of(node)
            kind = NodeKind.MIN if isinstance(node, fm.And) else NodeKind.MAX
            child_ids = tuple(
                build(c, f"{nid}.{i + 1}", nid) for i, c in enumerate(node.children)
            )
            nodes[nid] = BfNode(nid, kind, stratum, child_ids, parent)
            return nid
        if isinstance(node, (fm.Eventually, fm.Always)):
            idx = temporal_counter[0]
            temporal_counter[0] += 1
            gamma = gamma_at(idx)
            if gamma is None:
                raise TreeError(f"no gamma configured for temporal operator {idx} ({fm.to_string(node)})")
            a, b = node.a, node.b
            if isinstance(node, fm.Eventually):
                beta = gamma.first_nonpositive(t1, b)
                if beta is None:
                    raise GammaFeasibilityError(
                        f"eventually funnel {idx} never reaches 0 by its deadline {b:g}"
                    )
                kind = NodeKind.TEMPORAL_F
            else:
                grid = np.linspace(max(a, t1), b, 65)
                worst = max(gamma(t) for t in grid)
                if worst > 1e-12:
                    raise GammaFeasibilityError(
                        f"always funnel {idx} is positive inside [{a:g},{b:g}] (max {worst:g})"
                    )
                beta = b
                kind = NodeKind.TEMPORAL_G
            child_id = build(node.child, f"{nid}.1", nid)
            nodes[nid] = BfNode(
                nid, kind, fm.Stratum.PHI, (child_id,), parent,
                gamma=gamma, beta=beta, interval=(a, b),
            )
            return nid
        raise TreeError(f"cannot compile formula node {node!r}")

    root = build(formula, "0", None)

    n_temporal = temporal_counter[0]
    if n_cfg is not None and n_cfg > n_temporal:
        raise TreeError(
            f"gamma_cfg has {n_cfg} entries but the formula has {n_temporal} temporal operators"
        )

    postorder: list[str] = []

    def walk(nid: str):
        for c in nodes[nid].children:
            walk(c)
        postorder.append(nid)

    walk(root)

    # Static betas for compositions (no history): conjunction = max over
    # children, disjunction = min over children.
    static_beta: dict[str, float] = {}
    for nid in postorder:
        node = nodes[nid]
        if node.kind in (NodeKind.ELEMENTARY,):
            static_beta[nid] = INF
        elif node.kind in (NodeKind.TEMPORAL_F, NodeKind.TEMPORAL_G):
            static_beta[nid] = node.beta
        elif node.kind == NodeKind.MIN:
            static_beta[nid] = max(static_beta[c] for c in node.children)
        else:
            static_beta[nid] = min(static_beta[c] for c in node.children)
    for nid, b in static_beta.items():
        if nodes[nid].kind in (NodeKind.MIN, NodeKind.MAX):
            nodes[nid] = replace(nodes[nid], beta=b)

    # The tree value is identically zero exactly after the root deactivates:
    # a conjunction expires with its last child, a disjunction with its first
    # qualified one, and a temporal root with its own funnel.
    horizon = static_beta[root]

    for nid in postorder:
        g = nodes[nid].gamma
        if g is not None and g.shape == "affine_clamp" and g.t_star < horizon:
            raise TreeError(
                f"affine_clamp funnel on node {nid!r} kinks at {g.t_star:g}, "
                f"inside the horizon {horizon:g}; use smooth_clamp instead"
            )

    return BfTree(
        nodes=nodes,
        root=root,
        horizon=horizon,
        t1=t1,
        postorder=tuple(postorder),
        elementary=tuple(elementary),
        formula=formula,
    )


# ---------------------------------------------------------------------------
# Evaluation


def _betas(tree: BfTree, hist: History) -> dict[str, float]:
    """Deactivation times under the given history, computed bottom-up.

    Disqualification can only shrink a disjunction's qualified set, so its
    beta weakly increases over a run; with no qualified children left the
    min-over-empty convention yields 0 and the node reads as deactivated.
    """
    out: dict[str, float] = {}
    for nid in tree.postorder:
        node = tree.nodes[nid]
        if node.kind == NodeKind.ELEMENTARY:
            out[nid] = INF
        elif node.kind in (NodeKind.TEMPORAL_F, NodeKind.TEMPORAL_G):
            out[nid] = node.beta
        elif node.kind == NodeKind.MIN:
            out[nid] = max(out[c] for c in node.children)
        else:
            qual = [c for c in node.children if c not in _disq(node, hist)]
            out[nid] = min(out[c] for c in qual) if qual else 0.0
    return out


def _disq(node: BfNode, hist: History) -> frozenset[str]:
    """Disqualified children; only temporal-stratum disjunctions have any."""
    if node.kind != NodeKind.MAX or node.stratum is not fm.Stratum.PHI:
        return frozenset()
    return hist.disqualified.get(node.id, frozenset())


def node_beta(tree: BfTree, node_id: str, hist: History = EMPTY_HISTORY) -> float:
    """Deactivation time of one node under the given history."""
    tree.node(node_id)
    return _betas(tree, hist)[node_id]


def eval_all(
    tree: BfTree,
    t: float,
    x: np.ndarray,
    hist: History = EMPTY_HISTORY,
    betas: Mapping[str, float] | None = None,
) -> dict[str, float]:
    """Values of every node at (t, x) in one bottom-up pass."""
    if betas is None:
        betas = _betas(tree, hist)
    vals: dict[str, float] = {}
    for nid in tree.postorder:
        node = tree.nodes[nid]
        if node.kind == NodeKind.ELEMENTARY:
            vals[nid] = node.pred.eval(x)
        elif node.kind == NodeKind.MIN:
            qual = [c for c in node.children if t <= betas[c]]
            vals[nid] = min(vals[c] for c in qual) if qual else 0.0
        elif node.kind == NodeKind.MAX:
            qual = [c for c in node.children if c not in _disq(node, hist)]
            if not qual or t > betas[nid]:
                vals[nid] = 0.0
            else:
                vals[nid] = max(vals[c] for c in qual)
        else:  # temporal
            if t > node.beta:
                vals[nid] = 0.0
            else:
                vals[nid] = vals[node.children[0]] + node.gamma(t)
    return vals


def eval_node(
    tree: BfTree, node_id: str, t: float, x: np.ndarray, hist: History = EMPTY_HISTORY
) -> float:
    """Value of one node at (t, x); raises TreeError for unknown ids."""
    tree.node(node_id)
    return eval_all(tree, t, x, hist)[node_id]


def qualified_children(
    tree: BfTree, node_id: str, t: float, hist: History = EMPTY_HISTORY
) -> frozenset[str]:
    """Children currently entering a node's composition.

    Conjunctions drop children past their deactivation time; disjunctions
    drop history-disqualified children; all other nodes keep their child.
    """
    node = tree.node(node_id)
    if node.kind == NodeKind.MIN:
        betas = _betas(tree, hist)
        return frozenset(c for c in node.children if t <= betas[c])
    if node.kind == NodeKind.MAX:
        return frozenset(c for c in node.children if c not in _disq(node, hist))
    return frozenset(node.children)


def path_set(
    tree: BfTree, i: str, k: str, t: float, hist: History = EMPTY_HISTORY
) -> frozenset[str]:
    """Ids on the qualified branch from node i down to leaf k (empty if none).

    The branch is unique when it exists because every node feeds at most
    one composition.
    """
    node = tree.node(i)
    tree.node(k)
    if node.kind == NodeKind.ELEMENTARY:
        return frozenset((k,)) if i == k else frozenset()
    for c in qualified_children(tree, i, t, hist):
        sub = path_set(tree, c, k, t, hist)
        if sub:
            return sub | {i}
    return frozenset()


def active_sets(
    tree: BfTree,
    t: float,
    x: np.ndarray,
    hist: History = EMPTY_HISTORY,
    tol: float | None = None,
) -> IndexSets:
    """Activity snapshot at (t, x): attaining children and attaining leaves.

    ``tol`` widens the equality tests; the default 1e-7 * (1 + |b0|) makes
    the sets robust to rounding.  Widening can only add candidates, never
    hide the attaining branch.
    """
    betas = _betas(tree, hist)
    vals = eval_all(tree, t, x, hist, betas=betas)
    if tol is None:
        tol = 1e-7 * (1.0 + abs(vals[tree.root]))

    qualified: dict[str, frozenset[str]] = {}
    active: dict[str, frozenset[str]] = {}
    for nid in tree.postorder:
        node = tree.nodes[nid]
        if node.kind == NodeKind.MIN:
            qual = frozenset(c for c in node.children if t <= betas[c])
        elif node.kind == NodeKind.MAX:
            qual = frozenset(c for c in node.children if c not in _disq(node, hist))
        else:
            qual = frozenset(node.children)
        qualified[nid] = qual
        g_i = tree.gamma_value(nid, t)
        active[nid] = frozenset(
            c for c in qual if abs(vals[nid] - (vals[c] + g_i)) <= tol
        )

    active_elem: dict[str, set[str]] = {nid: set() for nid in tree.postorder}
    root_paths: dict[str, tuple[str, ...]] = {}
    for k in tree.elementary:
        h_k = vals[k]
        active_elem[k].add(k)
        gsum = 0.0
        child = k
        chain = [k]
        while True:
            parent = tree.nodes[child].parent
            if parent is None:
                root_paths[k] = tuple(reversed(chain))
                break
            if child not in qualified[parent]:
                break
            gsum += tree.gamma_value(parent, t)
            if abs(vals[parent] - (h_k + gsum)) <= tol:
                active_elem[parent].add(k)
            chain.append(parent)
            child = parent

    return IndexSets(
        qualified=qualified,
        active=active,
        active_elementary={nid: frozenset(s) for nid, s in active_elem.items()},
        root_paths=root_paths,
        values=vals,
        tol=tol,
    )


@dataclass(frozen=True)
class BranchValue:
    value: float
    dt: float
    dx: np.ndarray


def eval_bk(
    tree: BfTree,
    k: str,
    t: float,
    x: np.ndarray,
    hist: History = EMPTY_HISTORY,
    sets: IndexSets | None = None,
) -> BranchValue:
    """Branch value b0^k = h_k(x) + sum of gamma along the root branch.

    Returns the value with its gradients: spatial gradient is the
    predicate's, time derivative sums the funnels' left-sided derivatives
    so deactivation instants evaluate cleanly.
    """
    if sets is not None:
        path = sets.root_paths.get(k)
    else:
        pset = path_set(tree, tree.root, k, t, hist)
        path = tuple(pset) if pset else None
    if not path:
        raise TreeError(f"no qualified branch from the root to leaf {k!r} at t={t:g}")
    node = tree.node(k)
    if node.pred is None:
        raise TreeError(f"{k!r} is not an elementary node")
    value = node.pred.eval(x)
    dt = 0.0
    for nid in path:
        value += tree.gamma_value(nid, t)
        dt += tree.gamma_deriv(nid, t)
    return BranchValue(value=value, dt=dt, dx=node.pred.grad(x))


def branch_triple(
    tree: BfTree,
    k: str,
    l: str,
    t: float,
    x: np.ndarray,
    hist: History = EMPTY_HISTORY,
    sets: IndexSets | None = None,
) -> tuple[str, str, str]:
    """Where the branches to active leaves k and l separate.

    Returns (i_kl, j_kl, q_kl): the deepest node q on both root paths and
    the two children of q heading toward k and l.  Unique by the tree
    property.
    """
    if k == l:
        raise TreeError("branch triple requires two distinct leaves")
    if sets is None:
        sets = active_sets(tree, t, x, hist)
    root_active = sets.active_elementary[tree.root]
    for leaf in (k, l):
        if leaf not in root_active:
            raise TreeError(f"leaf {leaf!r} is not active at the root for t={t:g}")
    path_k = sets.root_paths[k]
    path_l = sets.root_paths[l]
    split = 0
    for a, b in zip(path_k, path_l):
        if a != b:
            break
        split += 1
    q = path_k[split - 1]
    if tree.nodes[q].kind not in (NodeKind.MIN, NodeKind.MAX):
        raise TreeError(f"branch point {q!r} is not a min/max node; tree is corrupt")
    return path_k[split], path_l[split], q


def switch_fn(
    tree: BfTree,
    k: str,
    l: str,
    t: float,
    x: np.ndarray,
    hist: History = EMPTY_HISTORY,
    sets: IndexSets | None = None,
) -> tuple[float, np.ndarray]:
    """Signed boundary function between the sections of leaves k and l.

    s_kl >= 0 on leaf k's section; its zero set is the section boundary.
    Under a min branch point s_kl is (l-branch) - (k-branch); under a max
    branch point the sign flips.  Returns (value, gradient) with the
    gradient row ordered [d/dt, d/dx...]; time derivatives are left-sided.
    """
    if sets is None:
        sets = active_sets(tree, t, x, hist)
    i_kl, j_kl, q_kl = branch_triple(tree, k, l, t, x, hist, sets=sets)
    path_k = sets.root_paths[k]
    path_l = sets.root_paths[l]

    def branch(path: tuple[str, ...], head: str, leaf: str) -> tuple[float, float, np.ndarray]:
        suffix = path[path.index(head):]
        pred = tree.nodes[leaf].pred
        val = pred.eval(x)
        dt = 0.0
        for nid in suffix:
            val += tree.gamma_value(nid, t)
            dt += tree.gamma_deriv(nid, t)
        return val, dt, pred.grad(x)

    vk, dtk, dxk = branch(path_k, i_kl, k)
    vl, dtl, dxl = branch(path_l, j_kl, l)
    if tree.nodes[q_kl].kind == NodeKind.MIN:
        value = vl - vk
        grad = np.concatenate(([dtl - dtk], dxl - dxk))
    else:
        value = vk - vl
        grad = np.concatenate(([dtk - dtl], dxk - dxl))
    return value, grad


def update_history(
    tree: BfTree,
    hist: History,
    t: float,
    x: np.ndarray,
    tol: float = 1e-7,
) -> History:
    """Record disjunction children observed negative at (t, x).

    Must be called with nondecreasing t along a trajectory.  The strict
    margin ``tol`` avoids disqualifying a child that merely grazes zero.
    """
    if t < hist.last_time:
        raise HistoryError(f"history updated backwards in time ({t:g} < {hist.last_time:g})")
    vals = eval_all(tree, t, x, hist)
    disq = {nid: set(s) for nid, s in hist.disqualified.items()}
    changed = False
    for nid in tree.postorder:
        node = tree.nodes[nid]
        if node.kind != NodeKind.MAX or node.stratum is not fm.Stratum.PHI:
            continue
        current = disq.setdefault(nid, set())
        for c in node.children:
            if c not in current and vals[c] < -tol:
                current.add(c)
                changed = True
    if not changed and t == hist.last_time:
        return hist
    return History(
        disqualified={nid: frozenset(s) for nid, s in disq.items() if s},
        last_time=t,
    )
