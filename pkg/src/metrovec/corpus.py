"""POI textualization, neighborhood bags-of-words, vocabulary, negative sampling.

A POI becomes a bag of tokens: "cat_"-prefixed category phrases, a half-star
rating bucket, a price tier, and review words deduplicated within the POI.
Neighborhood bags are multiset unions over their POIs; duplicates across POIs
are kept on purpose because token frequency carries signal.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError
from .geo import GeoPoint

WordBag = Counter  # multiset of token strings

_REVIEW_SPLIT = re.compile(r"[^0-9a-z]+")
_PRETRAINED_SKIP_PREFIXES = ("cat_", "rate_", "price_")


@dataclass
class PoiRecord:
    id: str
    geo: GeoPoint
    neighborhood_id: str | None
    categories: list[str] = field(default_factory=list)
    rating: float | None = None
    price: int | None = None
    reviews: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.rating is not None and not (1.0 <= self.rating <= 5.0):
            raise ValidationError(f"POI {self.id!r}: rating {self.rating} outside [1.0, 5.0]")
        if self.price is not None and not (1 <= self.price <= 4):
            raise ValidationError(f"POI {self.id!r}: price tier {self.price} outside [1, 4]")


def _category_token(phrase: str) -> str:
    return "cat_" + "_".join(phrase.lower().split())


def _rating_token(rating: float) -> str:
    bucket = math.floor(rating * 2.0 + 0.5) / 2.0  # nearest half star, halves round up
    bucket = min(5.0, max(1.0, bucket))
    return f"rate_{bucket:.1f}".replace(".", "_")


def _review_tokens(reviews: list[str]) -> set[str]:
    tokens: set[str] = set()
    for text in reviews:
        for tok in _REVIEW_SPLIT.split(text.lower()):
            if len(tok) >= 2 and not tok.isdigit():
                tokens.add(tok)
    return tokens


def textualize_poi(poi: PoiRecord) -> WordBag:
    """Bag of tokens for one POI. Absent fields contribute no tokens; review
    words are deduplicated across the union of the POI's reviews."""
    bag: WordBag = Counter()
    for phrase in poi.categories:
        if phrase.strip():
            bag[_category_token(phrase)] += 1
    if poi.rating is not None:
        bag[_rating_token(poi.rating)] += 1
    if poi.price is not None:
        bag[f"price_{poi.price}"] += 1
    bag.update(sorted(_review_tokens(poi.reviews)))
    return bag


def build_neighborhood_bag(pois: list[PoiRecord]) -> WordBag:
    """Multiset union of the per-POI bags; duplicates across POIs preserved."""
    if pois:
        nids = {p.neighborhood_id for p in pois}
        if len(nids) != 1:
            raise ValidationError(f"POIs span multiple neighborhoods: {sorted(map(str, nids))}")
    bag: WordBag = Counter()
    for poi in pois:
        bag.update(textualize_poi(poi))
    return bag


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Token string <-> id bijection plus corpus frequency per token.

    Token ids follow lexicographic token order, so identical corpora always
    produce identical vocabularies.
    """

    tokens: tuple[str, ...]
    frequencies: np.ndarray  # int64, total occurrences across all bags

    def __post_init__(self):
        object.__setattr__(self, "_id_of", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def total_count(self) -> int:
        return int(self.frequencies.sum())

    def id_of(self, token: str) -> int:
        idx = self._id_of.get(token)
        if idx is None:
            raise ValidationError(f"token {token!r} not in vocabulary")
        return idx

    def __contains__(self, token: str) -> bool:
        return token in self._id_of

    def bag_to_ids(self, bag: WordBag) -> tuple[np.ndarray, np.ndarray]:
        """(token ids, counts) arrays for a bag, sorted by token id."""
        items = sorted((self.id_of(t), c) for t, c in bag.items())
        ids = np.array([i for i, _ in items], dtype=np.int64)
        counts = np.array([c for _, c in items], dtype=np.int64)
        return ids, counts


def build_vocabulary(bags) -> Vocabulary:
    total: Counter = Counter()
    for bag in bags:
        total.update(bag)
    if not total:
        raise ValidationError("cannot build a vocabulary: all bags are empty")
    tokens = tuple(sorted(total))
    freqs = np.array([total[t] for t in tokens], dtype=np.int64)
    return Vocabulary(tokens=tokens, frequencies=freqs)


class NegativeWordSampler:
    """Draws token ids outside a fixed context set with probability
    proportional to corpus frequency ** exponent."""

    def __init__(self, vocab: Vocabulary, context_ids, exponent: float = 0.5):
        weights = vocab.frequencies.astype(np.float64) ** exponent
        ctx = np.fromiter(context_ids, dtype=np.int64) if context_ids else np.empty(0, dtype=np.int64)
        if ctx.size:
            weights[ctx] = 0.0
        total = weights.sum()
        if total <= 0.0:
            raise ValidationError("context covers the entire vocabulary; no negative candidates")
        self._p = weights / total
        self._n = vocab.size

    @property
    def probabilities(self) -> np.ndarray:
        return self._p.copy()

    def draw(self, rng: np.random.Generator, size: int | None = None):
        return rng.choice(self._n, size=size, p=self._p)


def negative_sample_word(vocab: Vocabulary, context_ids, rng: np.random.Generator,
                         exponent: float = 0.5) -> int:
    return int(NegativeWordSampler(vocab, context_ids, exponent).draw(rng))


def load_pretrained_vectors(path, vocab: Vocabulary, dim: int) -> dict[int, np.ndarray]:
    """Map token id -> vector for vocabulary tokens found in a whitespace
    "token v1 ... vd" file. cat_/rate_/price_ tokens are never initialized
    from the file; the first occurrence of a token wins."""
    out: dict[int, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token = parts[0]
            if token.startswith(_PRETRAINED_SKIP_PREFIXES) or token not in vocab:
                continue
            if len(parts) - 1 != dim:
                raise FormatError(f"{path}:{lineno}: expected {dim} values for {token!r}, got {len(parts) - 1}")
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            out.setdefault(vocab.id_of(token), vec)
    return out


def read_poi_jsonl(path) -> list[PoiRecord]:
    """One PoiRecord per JSON line; fields id, lat, lon, neighborhood_id,
    categories, rating, price, reviews. Errors carry line numbers."""
    records: list[PoiRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            rec_id = obj.get("id", "<missing id>") if isinstance(obj, dict) else "<not an object>"
            try:
                records.append(PoiRecord(
                    id=str(obj["id"]),
                    geo=GeoPoint(float(obj["lat"]), float(obj["lon"])),
                    neighborhood_id=(None if obj.get("neighborhood_id") in (None, "")
                                     else str(obj["neighborhood_id"])),
                    categories=[str(c) for c in obj.get("categories", [])],
                    rating=None if obj.get("rating") is None else float(obj["rating"]),
                    price=None if obj.get("price") is None else int(obj["price"]),
                    reviews=[str(r) for r in obj.get("reviews", [])],
                ))
            except KeyError as exc:
                raise FormatError(f"{path}:{lineno} (POI {rec_id!r}): missing field {exc}") from None
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno} (POI {rec_id!r}): {exc}") from None
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno} (POI {rec_id!r}): {exc}") from None
    return records


def write_poi_jsonl(path, pois: list[PoiRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for poi in pois:
            fh.write(json.dumps({
                "id": poi.id,
                "lat": poi.geo.lat,
                "lon": poi.geo.lon,
                "neighborhood_id": poi.neighborhood_id,
                "categories": poi.categories,
                "rating": poi.rating,
                "price": poi.price,
                "reviews": poi.reviews,
            }, sort_keys=True) + "\n")
