"""Tag enrichment: which label best explains a localized sensor group.

Every tag seen in the population is scored by the hypergeometric upper
tail, i.e. the chance that a uniform draw of ``|selected|`` sensors from
the population contains at least as many carriers of that tag.
Hierarchical tags such as ``FAN6/VAV3`` count as both ``FAN6`` and ``VAV3``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from scipy.stats import hypergeom

from faultcorr.errors import ValidationError
from faultcorr.ingest import LabelRegistry


@dataclass(frozen=True)
class TagScore:
    tag: str
    hits_in_selected: int
    hits_in_population: int
    enrichment: float
    p_value: float

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "hits_in_selected": self.hits_in_selected,
            "hits_in_population": self.hits_in_population,
            "enrichment": self.enrichment,
            "p_value": self.p_value,
        }


@dataclass(frozen=True)
class CauseReport:
    ranked: tuple[TagScore, ...]
    untagged_selected: int

    @property
    def top(self) -> TagScore | None:
        return self.ranked[0] if self.ranked else None

    def to_list(self) -> list[dict]:
        return [t.to_dict() for t in self.ranked]

    def to_dict(self) -> dict:
        return {"ranked": self.to_list(), "untagged_selected": self.untagged_selected}


def expand_tags(tags: Iterable[str]) -> set[str]:
    out: set[str] = set()
    for tag in tags:
        out.update(part for part in tag.split("/") if part)
    return out


def upper_tail(hits: int, population: int, carriers: int, draws: int) -> float:
    """P(X >= hits) for X ~ Hypergeometric(population, carriers, draws)."""
    if hits <= 0 or carriers >= population:
        return 1.0
    p = float(hypergeom.sf(hits - 1, population, carriers, draws))
    return min(max(p, 0.0), 1.0)


def enrich(
    selected: Iterable[str],
    registry: LabelRegistry,
    population: Sequence[str],
) -> CauseReport:
    """Rank tags by enrichment among ``selected`` relative to ``population``."""
    chosen = list(dict.fromkeys(selected))
    if not chosen:
        raise ValidationError("selected set is empty")
    pop = list(dict.fromkeys(population))
    missing = set(chosen) - set(pop)
    if missing:
        raise ValidationError(f"selected sensors not in population: {sorted(missing)[:5]}")

    sensor_tags = {s: expand_tags(registry.get(s)) for s in pop}
    in_pop = Counter(t for tags in sensor_tags.values() for t in tags)
    in_sel = Counter(t for s in chosen for t in sensor_tags[s])
    untagged = sum(1 for s in chosen if not sensor_tags[s])

    n_pop, n_sel = len(pop), len(chosen)
    scores = []
    for tag, carriers in in_pop.items():
        hits = in_sel.get(tag, 0)
        enrichment = (hits / n_sel) / (carriers / n_pop)
        scores.append(TagScore(tag, hits, carriers, enrichment, upper_tail(hits, n_pop, carriers, n_sel)))
    scores.sort(key=lambda t: (t.p_value, -t.enrichment, t.tag))
    return CauseReport(tuple(scores), untagged)
