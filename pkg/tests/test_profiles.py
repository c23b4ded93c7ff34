import pytest
from hypothesis import given, settings, strategies as st

from fmar.ingest import favorable_items
from fmar.mining import AssociationRule
from fmar.profiles import (
    ProfileStore, UserProfile, build_profiles, nearest_neighbors, neighbor_expand, read_profiles,
    shortlist, user_similarity, write_profiles,
)

from conftest import make_dataset

A, B, C, D, E = 1, 2, 3, 4, 5


def rule(ante, cons):
    return AssociationRule(tuple(ante), tuple(cons), 0.5, 0.8, 1.2)


def store_of(mapping):
    return ProfileStore({u: UserProfile(u, frozenset(s)) for u, s in mapping.items()})


def test_build_profiles_examples():
    train = make_dataset([(1, A, 5), (1, B, 4), (2, A, 2), (3, A, 5), (3, B, 5)])
    rules = [rule([A], [C]), rule([A, B], [D]), rule([C], [E])]
    store = build_profiles(rules, train, 3)
    assert store.get(1).recommended == {C, D}
    assert store.get(2).recommended == set()
    self_rule = build_profiles([rule([A], [B])], train, 3)
    assert self_rule.get(3).recommended == set()


def test_shortlist_examples():
    assert shortlist(1, {1, 2, 3}, store_of({1: {2, 3, 9}})) == ({2, 3}, False)
    assert shortlist(1, {1, 2}, store_of({1: {7}})) == ({1, 2}, True)
    assert shortlist(1, {1}, store_of({1: {1}})) == ({1}, False)
    assert shortlist(42, {1, 2}, store_of({})) == ({1, 2}, True)
    with pytest.raises(ValueError):
        shortlist(1, set(), store_of({}))


def test_similarity_examples():
    same = make_dataset([(1, 1, 1), (1, 2, 3), (1, 3, 5), (2, 1, 1), (2, 2, 3), (2, 3, 5)])
    assert user_similarity(1, 2, same, "pearson") == pytest.approx(1.0)
    assert user_similarity(1, 2, same, "cosine") == pytest.approx(1.0)
    rev = make_dataset([(1, 1, 1), (1, 2, 2), (1, 3, 3), (2, 1, 3), (2, 2, 2), (2, 3, 1)])
    assert user_similarity(1, 2, rev, "pearson") == pytest.approx(-1.0)
    disjoint = make_dataset([(1, 1, 4), (2, 2, 4)])
    assert user_similarity(1, 2, disjoint, "pearson") == 0.0
    assert user_similarity(1, 2, disjoint, "cosine") == 0.0
    with pytest.raises(ValueError):
        user_similarity(1, 2, same, "jaccard")


def test_neighbor_expand():
    # users 2 and 3 rate identically to user 1, so they tie; 2 wins on id
    train = make_dataset([(u, i, r) for u in (1, 2, 3) for i, r in ((1, 1), (2, 3), (3, 5))] + [(1, 9, 5)])
    store = store_of({1: {20}, 2: {30, 9}, 3: {40}})
    store = ProfileStore(store.profiles, favor_threshold=3)
    assert neighbor_expand(store, 1, 0, train) == store.get(1)
    assert nearest_neighbors(1, 1, train) == [2]
    # 9 is already favorably rated by user 1
    assert neighbor_expand(store, 1, 1, train).recommended == {20, 30}
    assert neighbor_expand(store, 1, 2, train).recommended == {20, 30, 40}


def test_profile_file_round_trip(tmp_path):
    store = store_of({3: {5, 1, 9}, 1: set(), 2: {4}})
    path = tmp_path / "profiles.txt"
    write_profiles(store, path)
    assert path.read_text() == "1: \n2: 4\n3: 1,5,9\n"
    assert dict(read_profiles(path).profiles) == dict(store.profiles)


ratings = st.dictionaries(st.tuples(st.integers(1, 5), st.integers(1, 8)), st.integers(1, 5), min_size=1, max_size=30)
itemsets = st.frozensets(st.integers(1, 8), min_size=1, max_size=3)
rule_lists = st.lists(st.tuples(itemsets, itemsets).filter(lambda p: not p[0] & p[1]), max_size=10)


def _rules(pairs):
    return [rule(sorted(a), sorted(c)) for a, c in pairs]


@settings(max_examples=150, deadline=None)
@given(ratings, rule_lists, rule_lists, st.frozensets(st.integers(1, 8), min_size=1))
def test_profile_properties(pairs, base, extra, candidates):
    train = make_dataset([(u, i, r) for (u, i), r in sorted(pairs.items())])
    small = build_profiles(_rules(base), train, 3)
    big = build_profiles(_rules(base + extra), train, 3)
    for user in train.users():
        liked = favorable_items(train, user, 3)
        assert small.get(user).recommended <= big.get(user).recommended
        assert not big.get(user).recommended & liked
        kept, fallback = shortlist(user, candidates, big)
        if fallback:
            assert kept == candidates
        else:
            assert kept and kept <= candidates and kept <= big.get(user).recommended


@settings(max_examples=100, deadline=None)
@given(ratings, st.sampled_from(["pearson", "cosine"]))
def test_similarity_symmetric_and_bounded(pairs, measure):
    train = make_dataset([(u, i, r) for (u, i), r in sorted(pairs.items())])
    users = train.users()
    for u in users:
        for v in users:
            s = user_similarity(u, v, train, measure)
            assert -1.0 <= s <= 1.0
            assert s == user_similarity(v, u, train, measure)
