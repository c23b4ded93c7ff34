"""Per-user candidate profiles built from association rules.

A user's profile is the union of the consequents of every rule whose
antecedent is contained in the items that user rated favorably. Profiles are
used to shortlist the items a rating model has to score.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Mapping, Sequence

from .ingest import RatingDataset, favorable_items
from .mining import AssociationRule, format_rule

MEASURES = ("pearson", "cosine")


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    recommended: frozenset[int] = frozenset()


@dataclass(frozen=True)
class ProfileStore:
    profiles: Mapping[int, UserProfile]
    generated_from: str = ""
    favor_threshold: int = 3

    def get(self, user_id: int) -> UserProfile:
        return self.profiles.get(user_id) or UserProfile(user_id)

    def __len__(self):
        return len(self.profiles)


def rules_digest(rules: Iterable[AssociationRule]) -> str:
    h = hashlib.sha256()
    for rule in rules:
        h.update(format_rule(rule).encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


def _group_by_antecedent(rules: Iterable[AssociationRule]) -> dict[frozenset, set[int]]:
    grouped: dict[frozenset, set[int]] = {}
    for rule in rules:
        grouped.setdefault(frozenset(rule.antecedent), set()).update(rule.consequent)
    return grouped


def profile_for(liked: set[int], grouped: Mapping[frozenset, set[int]]) -> frozenset[int]:
    recommended: set[int] = set()
    for ante, cons in grouped.items():
        if ante <= liked:
            recommended |= cons
    return frozenset(recommended - liked)


def build_profiles(
    rules: Sequence[AssociationRule],
    train: RatingDataset,
    favor_threshold: int = 3,
    users: Iterable[int] | None = None,
) -> ProfileStore:
    """Build one profile per user (or per user in ``users``)."""
    grouped = _group_by_antecedent(rules)
    targets = train.users() if users is None else list(users)
    profiles = {}
    for user in targets:
        liked = favorable_items(train, user, favor_threshold)
        profiles[user] = UserProfile(user, profile_for(liked, grouped))
    return ProfileStore(profiles, rules_digest(rules), favor_threshold)


def shortlist(user: int, candidates: Iterable[int], store: ProfileStore) -> tuple[set[int], bool]:
    """Candidates inside the user's profile, or all candidates if none are.

    The boolean is True when the fallback fired.
    """
    candidates = set(candidates)
    if not candidates:
        raise ValueError("shortlist needs at least one candidate")
    kept = candidates & store.get(user).recommended
    if not kept:
        return candidates, True
    return kept, False


def user_similarity(u: int, v: int, train: RatingDataset, measure: str = "pearson") -> float:
    if measure not in MEASURES:
        raise ValueError(f"unknown similarity measure {measure!r}")
    ru, rv = train.user_ratings(u), train.user_ratings(v)
    common = sorted(ru.keys() & rv.keys())
    if measure == "cosine":
        if not common:
            return 0.0
        dot = sum(ru[i] * rv[i] for i in common)
        # norms over co-rated items only
        nu = math.sqrt(sum(ru[i] ** 2 for i in common))
        nv = math.sqrt(sum(rv[i] ** 2 for i in common))
        return _clip(dot / (nu * nv))
    if len(common) < 2:
        return 0.0
    xs = [ru[i] for i in common]
    ys = [rv[i] for i in common]
    mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        return 0.0
    return _clip(sxy / math.sqrt(sxx * syy))


def _clip(x: float) -> float:
    return max(-1.0, min(1.0, x))


def nearest_neighbors(user: int, n: int, train: RatingDataset, measure: str = "pearson") -> list[int]:
    """The ``n`` most similar other users; ties go to the smaller user id."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return []
    scored = [
        (-user_similarity(user, other, train, measure), other)
        for other in train.users()
        if other != user
    ]
    scored.sort()
    return [other for _, other in scored[:n]]


def neighbor_expand(
    store: ProfileStore, user: int, n: int, train: RatingDataset, measure: str = "pearson"
) -> UserProfile:
    own = store.get(user)
    if n == 0:
        return own
    merged = set(own.recommended)
    for other in nearest_neighbors(user, n, train, measure):
        merged |= store.get(other).recommended
    merged -= favorable_items(train, user, store.favor_threshold)
    return UserProfile(user, frozenset(merged))


def format_profile(profile: UserProfile) -> str:
    return f"{profile.user_id}: " + ",".join(map(str, sorted(profile.recommended)))


def parse_profile(line: str) -> UserProfile:
    head, sep, tail = line.rstrip("\n").partition(":")
    if not sep:
        raise ValueError(f"malformed profile line {line!r}")
    tail = tail.strip()
    items = frozenset(int(x) for x in tail.split(",")) if tail else frozenset()
    return UserProfile(int(head), items)


def write_profiles(store: ProfileStore, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user in sorted(store.profiles):
            fh.write(format_profile(store.profiles[user]) + "\n")


def read_profiles(path: str | PathLike, generated_from: str = "", favor_threshold: int = 3) -> ProfileStore:
    with open(path, encoding="utf-8") as fh:
        profiles = [parse_profile(line) for line in fh if line.strip()]
    return ProfileStore({p.user_id: p for p in profiles}, generated_from, favor_threshold)
