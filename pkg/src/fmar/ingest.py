"""MovieLens-format rating loading, evaluation-user selection and splitting.

Input files use the MovieLens 100K ``u.data`` layout: one rating per line,
``user_id<TAB>item_id<TAB>rating<TAB>timestamp``, no header.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Mapping, Sequence

import numpy as np

MIN_RATING = 1
MAX_RATING = 5


class ParseError(ValueError):
    """A rating file line could not be parsed."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DuplicateRatingError(ValueError):
    """The same (user, item) pair was rated more than once."""


@dataclass(frozen=True, slots=True)
class RatingRecord:
    user_id: int
    item_id: int
    rating: int
    timestamp: int = 0

    def __post_init__(self):
        if self.user_id < 1 or self.item_id < 1:
            raise ValueError(f"ids must be >= 1, got user={self.user_id} item={self.item_id}")
        if not MIN_RATING <= self.rating <= MAX_RATING:
            raise ValueError(f"rating {self.rating} outside [{MIN_RATING}, {MAX_RATING}]")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")


class RatingDataset:
    """Immutable collection of ratings indexed by user.

    ``by_user`` maps each user id to the positions of that user's records,
    in file order.
    """

    __slots__ = ("_records", "_by_user", "_pairs")

    def __init__(self, records: Iterable[RatingRecord]):
        self._records = tuple(records)
        by_user: dict[int, list[int]] = {}
        pairs: dict[tuple[int, int], int] = {}
        for pos, rec in enumerate(self._records):
            key = (rec.user_id, rec.item_id)
            if key in pairs:
                raise DuplicateRatingError(
                    f"user {rec.user_id} rated item {rec.item_id} more than once"
                )
            pairs[key] = rec.rating
            by_user.setdefault(rec.user_id, []).append(pos)
        self._by_user = {u: tuple(ix) for u, ix in by_user.items()}
        self._pairs = pairs

    @property
    def records(self) -> tuple[RatingRecord, ...]:
        return self._records

    @property
    def by_user(self) -> Mapping[int, tuple[int, ...]]:
        return self._by_user

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __contains__(self, pair) -> bool:
        return pair in self._pairs

    def users(self) -> list[int]:
        return sorted(self._by_user)

    def items(self) -> list[int]:
        return sorted({r.item_id for r in self._records})

    def user_records(self, user_id: int) -> list[RatingRecord]:
        return [self._records[i] for i in self._by_user.get(user_id, ())]

    def user_ratings(self, user_id: int) -> dict[int, int]:
        """item_id -> rating for one user."""
        return {r.item_id: r.rating for r in self.user_records(user_id)}

    def rating(self, user_id: int, item_id: int) -> int | None:
        return self._pairs.get((user_id, item_id))


def parse_line(line: str, lineno: int) -> RatingRecord:
    fields = line.split()
    if len(fields) != 4:
        raise ParseError(lineno, f"expected 4 fields, got {len(fields)}")
    try:
        user, item, rating, ts = (int(f) for f in fields)
    except ValueError:
        raise ParseError(lineno, f"non-integer field in {line.strip()!r}") from None
    try:
        return RatingRecord(user, item, rating, ts)
    except ValueError as exc:
        raise ParseError(lineno, str(exc)) from None


def load_ratings(path: str | PathLike) -> RatingDataset:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                records.append(parse_line(line, lineno))
    return RatingDataset(records)


def select_eval_users(ds: RatingDataset, n: int) -> list[int]:
    """The ``n`` most active users, by descending rating count then ascending id."""
    if n < 0 or n > len(ds.by_user):
        raise ValueError(f"cannot select {n} users from {len(ds.by_user)}")
    ranked = sorted(ds.by_user, key=lambda u: (-len(ds.by_user[u]), u))
    return ranked[:n]


@dataclass(frozen=True)
class EvalSplit:
    train: RatingDataset
    test_by_user: dict[int, tuple[RatingRecord, ...]]
    seed: int

    @property
    def n_test(self) -> int:
        return sum(len(v) for v in self.test_by_user.values())


def split_per_user(
    ds: RatingDataset, users: Sequence[int], test_frac: float, seed: int
) -> EvalSplit:
    """Hold out floor(test_frac * count) random ratings of each selected user.

    Users are processed in the given order from a single generator, so the
    split is a pure function of its arguments.
    """
    if not 0.0 <= test_frac <= 1.0:
        raise ValueError(f"test_frac must be in [0, 1], got {test_frac}")
    if len(set(users)) != len(users):
        raise ValueError("duplicate users in selection")
    rng = np.random.default_rng(seed)
    held_out: set[int] = set()
    test_by_user: dict[int, tuple[RatingRecord, ...]] = {}
    for user in users:
        if user not in ds.by_user:
            raise KeyError(f"user {user} not in dataset")
        positions = ds.by_user[user]
        # tolerance guards products such as 0.7 * 30 landing just below an integer
        n_test = math.floor(test_frac * len(positions) + 1e-9)
        chosen = rng.choice(len(positions), size=n_test, replace=False)
        picked = sorted(positions[i] for i in chosen)
        held_out.update(picked)
        test_by_user[user] = tuple(ds.records[p] for p in picked)
    train = RatingDataset(r for p, r in enumerate(ds.records) if p not in held_out)
    return EvalSplit(train=train, test_by_user=test_by_user, seed=seed)


@dataclass(frozen=True)
class Transaction:
    user_id: int
    items: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.items:
            raise ValueError(f"empty transaction for user {self.user_id}")


def favorable_items(ds: RatingDataset, user_id: int, favor_threshold: int) -> set[int]:
    return {r.item_id for r in ds.user_records(user_id) if r.rating > favor_threshold}


def extract_transactions(train: RatingDataset, favor_threshold: int = 3) -> list[Transaction]:
    """One transaction per user holding the items rated strictly above the threshold."""
    if not MIN_RATING <= favor_threshold <= MAX_RATING:
        raise ValueError(f"favor_threshold {favor_threshold} outside rating scale")
    txns = []
    for user in train.users():
        liked = favorable_items(train, user, favor_threshold)
        if liked:
            txns.append(Transaction(user, frozenset(liked)))
    return txns

