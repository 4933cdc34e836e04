import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmem import InvalidArgument, SourceSummary, Strategy, assign, pool
from dmem.clustering import kmeans_1d, pool_assignment

PARTITIONING = [s for s in Strategy if s is not Strategy.SINGLETONS]


def sources(k, mean=0.0):
    return [SourceSummary(str(i), 20, mean + 0.01 * i if mean is None else mean, 1.0) for i in range(k)]


def as_one_based(assignment):
    return [[i + 1 for i in c] for c in assignment.clusters]


def test_ordered_combine():
    a = assign(sources(12), Strategy.ORDERED_COMBINE, 3)
    assert as_one_based(a) == [[1, 2, 3, 4], [5, 6, 7, 8], [9, 10, 11, 12]]


def test_ordered_combine_uneven_sizes():
    sizes = [len(c) for c in assign(sources(13), Strategy.ORDERED_COMBINE, 3).clusters]
    assert sizes == [5, 4, 4]


def test_evenly_distributed():
    a = assign(sources(12), Strategy.EVENLY_DISTRIBUTED, 3)
    assert as_one_based(a) == [[1, 4, 7, 10], [2, 5, 8, 11], [3, 6, 9, 12]]


def test_single_half_combine_half():
    a = assign(sources(100), Strategy.SINGLE_HALF_COMBINE_HALF, 10)
    assert [len(c) for c in a.clusters] == [1] * 5 + [19] * 5
    assert [c[0] for c in a.clusters[:5]] == [0, 1, 2, 3, 4]


def test_small_selection_gives_singletons():
    for strategy in PARTITIONING:
        a = assign(sources(4), strategy, 10, rng_seed=1)
        assert a.clusters == ((0,), (1,), (2,), (3,))


def test_errors():
    with pytest.raises(InvalidArgument):
        assign(sources(3), Strategy.RANDOM, 0)
    with pytest.raises(InvalidArgument):
        assign([], Strategy.RANDOM, 3)


def test_random_seed_determinism():
    a = assign(sources(50), Strategy.RANDOM, 10, rng_seed=11)
    b = assign(sources(50), Strategy.RANDOM, 10, rng_seed=11)
    c = assign(sources(50), Strategy.RANDOM, 10, rng_seed=12)
    assert a == b and a != c
    assert sorted(len(x) for x in a.clusters) == [5] * 10


def test_kmeans_separates_groups():
    srcs = [SourceSummary(str(i), 20, m, 1.0) for i, m in enumerate([0, 0.01, 0.02, 5, 5.01, 9.9, 10])]
    a = assign(srcs, Strategy.KMEANS, 3, rng_seed=0)
    assert sorted(a.clusters) == [(0, 1, 2), (3, 4), (5, 6)]


def test_kmeans_descends_from_initial():
    x = np.random.default_rng(5).normal(size=80)
    res = kmeans_1d(x, 6, np.random.default_rng(1))
    assert res.inertia <= res.initial_inertia
    assert len(set(res.labels)) == 6


def test_kmeans_duplicate_values_still_fill_clusters():
    res = kmeans_1d([1.0] * 8 + [2.0] * 2, 4, np.random.default_rng(0))
    assert len(set(res.labels)) == 4


class TestPool:
    def test_identical(self):
        s = SourceSummary("a", 20, 0.0, 1.0)
        p = pool([s, SourceSummary("b", 20, 0.0, 1.0)])
        assert (p.n, p.precision, p.mean, p.variance) == (40, 40.0, 0.0, 1.0)

    def test_symmetric_means(self):
        p = pool([SourceSummary("a", 20, 0.0, 1.0), SourceSummary("b", 20, 1.0, 1.0)])
        assert p.mean == 0.5

    def test_unequal_sizes_match_raw_pooling(self):
        a, b = SourceSummary("a", 10, 0.2, 1.0), SourceSummary("b", 30, 0.6, 1.0)
        p = pool([a, b])
        assert p.mean == pytest.approx(0.5, abs=1e-15)
        assert p.precision == pytest.approx(40.0, abs=1e-12)
        # brute force: concatenate 10 copies of 0.2 and 30 copies of 0.6
        assert p.mean == pytest.approx(np.mean([0.2] * 10 + [0.6] * 30), abs=1e-15)

    def test_singleton_passthrough(self):
        s = SourceSummary("a", 7, 0.3, 0.9)
        assert pool([s]) is s

    def test_empty(self):
        with pytest.raises(InvalidArgument):
            pool([])


member = st.builds(
    lambda n, m, sd: SourceSummary("x", n, m, sd * sd),
    st.integers(2, 40), st.floats(-5, 5), st.floats(0.3, 3),
)


@settings(max_examples=100, deadline=None)
@given(members=st.lists(member, min_size=1, max_size=10))
def test_pooled_precision_and_mean_bounds(members):
    p = pool(members)
    assert p.precision == pytest.approx(sum(s.precision for s in members), rel=1e-12)
    lo, hi = min(s.mean for s in members), max(s.mean for s in members)
    assert lo - 1e-12 <= p.mean <= hi + 1e-12


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 60), M=st.integers(1, 12), seed=st.integers(0, 2**31),
    strategy=st.sampled_from(PARTITIONING),
)
def test_partition_property(n, M, seed, strategy):
    srcs = [SourceSummary(str(i), 10 + i % 7, 0.05 * i, 1.0) for i in range(n)]
    a = assign(srcs, strategy, M, rng_seed=seed)
    flat = sorted(i for c in a.clusters for i in c)
    assert flat == list(range(n))
    assert 1 <= len(a.clusters) <= M
    pooled = pool_assignment(srcs, a)
    assert sum(p.n for p in pooled) == sum(s.n for s in srcs)


@settings(max_examples=60, deadline=None)
@given(
    mu=st.floats(-100, 100), n=st.integers(1, 40), M=st.integers(1, 10),
    strategy=st.sampled_from(PARTITIONING), seed=st.integers(0, 1000),
)
def test_common_mean_is_preserved_exactly(mu, n, M, strategy, seed):
    rng = np.random.default_rng(seed)
    srcs = [SourceSummary(str(i), int(rng.integers(2, 30)), mu, float(rng.uniform(0.2, 3))) for i in range(n)]
    for p in pool_assignment(srcs, assign(srcs, strategy, M, rng_seed=seed)):
        assert p.mean == mu
