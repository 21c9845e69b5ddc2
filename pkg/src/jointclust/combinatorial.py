"""Disagreement-minimising partitions.

Two routes to the same objective, the total number of disagreements
inside clusters:

* ``exhaustive_min_disagreement`` enumerates every partition into groups
  of a fixed size and keeps the best one.  Only feasible for a dozen items.
* ``greedy_zero_disagreement`` repeatedly peels off a maximum clique of the
  compatibility graph (edges join items with zero disagreements).  It does
  not need the cluster size.
"""

import math
import sys
from itertools import combinations

import numpy as np

from .metrics import disagreement_matrix

MAX_PARTITIONS = 20_000
CLIQUE_NODE_BUDGET = 20_000


class EnumerationBudgetError(ValueError):
    pass


def _side(observed, axis):
    observed = np.asarray(observed)
    if axis not in (0, 1):
        raise ValueError(f"axis must be 0 (rows) or 1 (columns), got {axis}")
    return observed if axis == 0 else observed.T


def total_disagreements(observed, labels, axis=0):
    """Sum of pairwise disagreements over all same-cluster pairs."""
    dis = disagreement_matrix(_side(observed, axis))
    labels = np.asarray(labels)
    if labels.shape != (dis.shape[0],):
        raise ValueError(f"partition has {labels.size} labels for {dis.shape[0]} items")
    same = labels[:, None] == labels[None, :]
    return int(np.triu(dis * same, k=1).sum())


def count_equal_partitions(n, K):
    """Number of ways to split ``n`` items into unlabeled groups of size ``K``."""
    r = n // K
    return math.factorial(n) // (math.factorial(K) ** r * math.factorial(r))


def exhaustive_min_disagreement(observed, K, axis=0, max_partitions=MAX_PARTITIONS):
    """Global minimiser of ``total_disagreements`` over equal-size partitions.

    Partitions are enumerated in canonical form (each group labeled in order
    of its smallest member).  Among minimisers the lexicographically smallest
    label vector is returned.
    """
    dis = disagreement_matrix(_side(observed, axis))
    n = dis.shape[0]
    if K < 1 or n % K:
        raise ValueError(f"cluster size K={K} does not divide n={n}")
    count = count_equal_partitions(n, K)
    if count > max_partitions:
        raise EnumerationBudgetError(
            f"{count} partitions of {n} items into groups of {K} exceed the "
            f"enumeration budget of {max_partitions}; use greedy_zero_disagreement"
        )
    dis = dis.tolist()
    labels = [-1] * n
    best_cost = math.inf
    best_labels = None

    def search(group, remaining, cost):
        nonlocal best_cost, best_labels
        if not remaining:
            if cost < best_cost or (cost == best_cost and labels < best_labels):
                best_cost, best_labels = cost, list(labels)
            return
        lead, rest = remaining[0], remaining[1:]
        for combo in combinations(rest, K - 1):
            members = (lead,) + combo
            c = cost + sum(dis[a][b] for a, b in combinations(members, 2))
            if c > best_cost:
                continue
            for v in members:
                labels[v] = group
            chosen = set(combo)
            search(group + 1, [v for v in rest if v not in chosen], c)
        for v in remaining:
            labels[v] = -1

    search(0, list(range(n)), 0)
    return np.array(best_labels, dtype=np.int64)


class _Budget(Exception):
    pass


def _bits(indices):
    out = 0
    for i in indices:
        out |= 1 << int(i)
    return out


def _members(bits):
    out = []
    while bits:
        low = bits & -bits
        out.append(low.bit_length() - 1)
        bits ^= low
    return out


def _color_order(adj, cand):
    """Greedy sequential colouring; returns vertices with their colour numbers."""
    order, colors = [], []
    uncolored = cand
    k = 0
    while uncolored:
        k += 1
        q = uncolored
        while q:
            low = q & -q
            v = low.bit_length() - 1
            q &= ~adj[v] & ~low
            uncolored &= ~low
            order.append(v)
            colors.append(k)
    return order, colors


def _greedy_clique(adj, cand):
    clique = []
    while cand:
        best_v, best_deg = -1, -1
        for v in _members(cand):
            deg = (adj[v] & cand).bit_count()
            if deg > best_deg:
                best_v, best_deg = v, deg
        clique.append(best_v)
        cand &= adj[best_v]
    return clique


def max_clique(adj, cand, node_budget=CLIQUE_NODE_BUDGET):
    """Maximum clique inside the vertex bitset ``cand``.

    Branch and bound with a colouring bound.  ``adj`` is a list of neighbour
    bitsets (no self loops).  Returns ``(vertices, proven)``; when the node
    budget runs out ``proven`` is False and the larger of the best clique
    found so far and a greedy maximal clique is returned.
    """
    best = []
    nodes = 0

    def expand(current, p):
        nonlocal best, nodes
        order, colors = _color_order(adj, p)
        for v, c in zip(reversed(order), reversed(colors)):
            if len(current) + c <= len(best):
                return
            nodes += 1
            if nodes > node_budget:
                raise _Budget
            low = 1 << v
            sub = p & adj[v]
            current.append(v)
            if sub:
                expand(current, sub)
            elif len(current) > len(best):
                best = list(current)
            current.pop()
            p &= ~low

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, cand.bit_length() + 200))
    try:
        expand([], cand)
        proven = True
    except _Budget:
        proven = False
        greedy = _greedy_clique(adj, cand)
        if len(greedy) > len(best):
            best = greedy
    finally:
        sys.setrecursionlimit(limit)
    return sorted(best), proven


def compatibility_graph(observed, axis=0):
    """Neighbour bitsets of the zero-disagreement graph."""
    dis = disagreement_matrix(_side(observed, axis))
    n = dis.shape[0]
    zero = dis == 0
    np.fill_diagonal(zero, False)
    return [_bits(np.flatnonzero(zero[i])) for i in range(n)]


def greedy_zero_disagreement(observed, axis=0, node_budget=CLIQUE_NODE_BUDGET,
                             return_fallbacks=False):
    """Cluster by repeatedly removing a largest mutually compatible set.

    Groups are labeled in extraction order and may differ in size.  With
    ``return_fallbacks`` the number of clique searches that exhausted the
    node budget (and fell back to a heuristic clique) is returned as well.
    """
    adj = compatibility_graph(observed, axis)
    n = len(adj)
    labels = np.full(n, -1, dtype=np.int64)
    remaining = (1 << n) - 1
    fallbacks = 0
    group = 0
    while remaining:
        clique, proven = max_clique(adj, remaining, node_budget)
        fallbacks += not proven
        labels[clique] = group
        remaining &= ~_bits(clique)
        group += 1
    if return_fallbacks:
        return labels, fallbacks
    return labels
