from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedgem.core import ComponentMessage
from fedgem.server import (
    UnionFind,
    aggregate,
    consensus_point,
    final_aggregate,
    overlap,
    server_update,
    server_update_kdtree,
)


def msg(g, k, x, r, n=100):
    return ComponentMessage(g, k, np.atleast_1d(np.asarray(x, dtype=float)), float(r) ** 2, n)


def random_messages(rng, max_components=50, d=None):
    d = d or int(rng.integers(1, 4))
    G = int(rng.integers(2, 8))
    out = []
    for g in range(G):
        for k in range(int(rng.integers(1, 6))):
            if len(out) >= max_components:
                return out
            out.append(msg(g, k, rng.uniform(-10, 10, size=d), rng.exponential(1.5), int(rng.integers(1, 500))))
    return out


def bfs_components(msgs):
    n = len(msgs)
    adj = [[j for j in range(n) if j != i and msgs[i].client_id != msgs[j].client_id and overlap(msgs[i], msgs[j])] for i in range(n)]
    seen = [False] * n
    count = 0
    for s in range(n):
        if seen[s]:
            continue
        count += 1
        seen[s] = True
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    q.append(v)
    return count


@pytest.mark.parametrize(
    "d, r1, r2, expected",
    [(3.0, 1, 1, False), (2.0, 1, 1, True), (0.0, 0, 0, True)],
)
def test_overlap_examples(d, r1, r2, expected):
    assert overlap(msg(0, 0, 0.0, r1), msg(1, 0, d, r2)) is expected


def test_overlap_dimension_mismatch():
    with pytest.raises(ValueError):
        overlap(msg(0, 0, [0.0, 0.0], 1), msg(1, 0, [0.0], 1))


def test_consensus_examples():
    np.testing.assert_allclose(consensus_point(msg(0, 0, 0.0, 3), msg(1, 0, 4.0, 3)), [2.0])
    np.testing.assert_allclose(consensus_point(msg(0, 0, 0.0, 1), msg(1, 0, 4.0, 4)), [1.0])
    np.testing.assert_allclose(consensus_point(msg(0, 0, 1.0, 0), msg(1, 0, 1.0, 0)), [1.0])


def test_consensus_inside_both_balls(rng):
    for _ in range(500):
        d = int(rng.integers(1, 4))
        p, q = rng.normal(size=d) * 3, rng.normal(size=d) * 3
        w = np.linalg.norm(p - q)
        r1 = rng.uniform(0, w)
        r2 = w - r1 + rng.exponential(1.0)
        a, b = msg(0, 0, p, r1), msg(1, 0, q, r2)
        for m1, m2 in ((a, b), (b, a)):
            nu = consensus_point(m1, m2)
            tol = 1e-9 * (1 + w)
            assert np.linalg.norm(nu - m1.maximizer) <= m1.radius + tol
            assert np.linalg.norm(nu - m2.maximizer) <= m2.radius + tol


def test_union_find():
    uf = UnionFind(5)
    assert uf.union(0, 3) and uf.union(3, 4)
    assert not uf.union(4, 0)
    assert uf.find(4) == uf.find(0) == uf.find(uf.find(3))
    assert uf.labels() == [0, 1, 2, 0, 0]


def test_no_overlap_is_identity():
    msgs = [msg(0, 0, 0.0, 1), msg(0, 1, 10.0, 1), msg(1, 0, 20.0, 1)]
    updates, part = server_update(msgs)
    assert part.count == 3
    for m in msgs:
        assert np.array_equal(updates[m.key], m.maximizer)


def test_heavy_overlap_two_clients():
    a, b = msg(0, 0, 0.0, 3), msg(1, 0, 4.0, 3)
    updates, part = server_update([a, b])
    assert part.count == 1
    # T-sets {0, 2} and {4, 2}
    np.testing.assert_allclose(updates[(0, 0)], [1.0])
    np.testing.assert_allclose(updates[(1, 0)], [3.0])


def test_chain_merge():
    msgs = [msg(0, 0, 0.0, 1), msg(1, 0, 2.0, 1), msg(2, 0, 4.0, 1)]
    _, part = server_update(msgs)
    assert part.count == 1
    assert not overlap(msgs[0], msgs[2])


def test_same_client_never_compared():
    msgs = [msg(0, 0, 0.0, 5), msg(0, 1, 1.0, 5)]
    updates, part = server_update(msgs)
    assert part.count == 2
    assert np.array_equal(updates[(0, 0)], [0.0])


def test_same_client_bridged_by_other_client():
    msgs = [msg(0, 0, 0.0, 1), msg(0, 1, 3.0, 1), msg(1, 0, 1.5, 1)]
    _, part = final_aggregate(msgs)
    assert part.count == 1


def test_duplicate_keys_rejected():
    with pytest.raises(ValueError):
        server_update([msg(0, 0, 0.0, 1), msg(0, 0, 1.0, 1)])


def test_update_in_convex_hull(rng):
    for _ in range(50):
        msgs = [msg(g, 0, rng.normal(size=1) * 3, rng.exponential(2)) for g in range(6)]
        updates, _ = server_update(msgs)
        lo = min(float(m.maximizer[0]) for m in msgs)
        hi = max(float(m.maximizer[0]) for m in msgs)
        for u in updates.values():
            assert lo - 1e-12 <= u[0] <= hi + 1e-12


def test_k_hat_matches_bfs(rng):
    for _ in range(200):
        msgs = random_messages(rng)
        _, part = server_update(msgs)
        assert part.count == bfs_components(msgs)
        assert sorted(set(part.assignment.values())) == list(range(part.count))


def test_kdtree_equivalence(rng):
    for _ in range(200):
        msgs = random_messages(rng, 200)
        u1, p1 = server_update(msgs)
        u2, p2 = server_update_kdtree(msgs)
        assert p1 == p2
        for key in u1:
            np.testing.assert_allclose(u2[key], u1[key], atol=1e-9, rtol=0)


def test_kdtree_boundary_pair():
    msgs = [msg(0, 0, 0.0, 1), msg(1, 0, 2.0, 1)]
    assert server_update_kdtree(msgs)[1].count == 1


def test_aggregate_dispatch():
    msgs = [msg(0, 0, 0.0, 1), msg(1, 0, 5.0, 1)]
    assert aggregate(msgs, "kdtree")[1] == aggregate(msgs, "pairwise")[1]
    with pytest.raises(ValueError):
        aggregate(msgs, "bogus")


def test_final_weighted_mean():
    finals, part = final_aggregate([msg(0, 0, 0.0, 3, n=100), msg(1, 0, 4.0, 3, n=300)])
    assert part.count == 1
    np.testing.assert_allclose(finals[(0, 0)], [3.0])
    assert np.array_equal(finals[(0, 0)], finals[(1, 0)])


def test_final_singleton_unchanged():
    m = msg(0, 0, [0.1, 0.2], 0.5)
    finals, part = final_aggregate([m, msg(1, 0, [9.0, 9.0], 0.5)])
    assert part.count == 2
    assert np.array_equal(finals[(0, 0)], m.maximizer)


def test_final_idempotent(rng):
    # Holds when super-clusters are well apart; in general a merged centre can
    # land inside another ball and cascade (see the merge-cascade test below).
    for _ in range(50):
        d = int(rng.integers(1, 4))
        centres = rng.permutation(10)[:4, None] * 20.0 + np.zeros((1, d))
        msgs = []
        for g in range(int(rng.integers(2, 6))):
            for k, c in enumerate(centres[rng.choice(4, size=int(rng.integers(1, 4)), replace=False)]):
                msgs.append(msg(g, k, c + rng.uniform(-1, 1, size=d), rng.uniform(1.5, 3), int(rng.integers(1, 500))))
        finals, part = final_aggregate(msgs)
        again = [ComponentMessage(m.client_id, m.component_idx, finals[m.key], m.eps, m.sample_count) for m in msgs]
        finals2, part2 = final_aggregate(again)
        assert part2 == part
        for key in finals:
            np.testing.assert_allclose(finals2[key], finals[key], atol=1e-12)


def test_final_merge_can_cascade():
    msgs = [msg(0, 0, [0.0, 0.0], 2), msg(1, 0, [4.0, 0.0], 2), msg(2, 0, [2.0, 2.5], 0.6)]
    finals, part = final_aggregate(msgs)
    assert part.count == 2
    np.testing.assert_allclose(finals[(0, 0)], [2.0, 0.0])
    again = [ComponentMessage(m.client_id, m.component_idx, finals[m.key], m.eps, m.sample_count) for m in msgs]
    assert final_aggregate(again)[1].count == 1


def test_final_kdtree_mode(rng):
    for _ in range(50):
        msgs = random_messages(rng)
        f1, p1 = final_aggregate(msgs)
        f2, p2 = final_aggregate(msgs, "kdtree")
        assert p1 == p2
        assert all(np.array_equal(f1[k], f2[k]) for k in f1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_order_and_relabel_invariance(seed):
    rng = np.random.default_rng(seed)
    msgs = random_messages(rng)
    updates, part = server_update(msgs)
    shuffled = [msgs[i] for i in rng.permutation(len(msgs))]
    u2, p2 = server_update(shuffled)
    assert p2 == part
    assert all(np.array_equal(u2[k], updates[k]) for k in updates)

    G = max(m.client_id for m in msgs) + 1
    perm = rng.permutation(G)
    relabeled = [ComponentMessage(int(perm[m.client_id]), m.component_idx, m.maximizer, m.eps, m.sample_count) for m in msgs]
    _, p3 = server_update(relabeled)
    back = {(int(perm[g]), k): (g, k) for g, k in part.assignment}
    assert frozenset(frozenset(back[key] for key in grp) for grp in p3.groups()) == part.canonical()
