"""Seeded synthetic corpus generator.

Stands in for the restricted national death-investigation data at desk
scale. Reports are assembled from fixed sentence templates: each planted
factor mention pairs a factor-specific lexicon phrase with a temporal phrase
from a fixed table of exact day offsets, so gold labels are computable
without any NLP. Identical generator specs yield byte-identical output.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping

from .corpus import GoldRelevanceSet, IncidentRecord
from .factors import FactorRegistry, builtin_registry
from .segmenter import normalize, segment

TWO_WEEK_WINDOW_DAYS = 14  # inclusive

# Phrase -> exact day offset before the incident. Used by both the generator
# and the deterministic mock backend; entries must never contain one another
# as substrings.
TEMPORAL_PHRASES: dict[str, int] = {
    "on the day of the incident": 0,
    "the day before the incident": 1,
    "two days before his death": 2,
    "three days before the incident": 3,
    "five days before the incident": 5,
    "one week before the incident": 7,
    "ten days before the incident": 10,
    "twelve days before the incident": 12,
    "two weeks before the incident": 14,
    "three weeks before the incident": 21,
    "one month before the incident": 30,
    "two months before the incident": 60,
    "three months earlier": 90,
    "six months before the incident": 180,
    "one year before the incident": 365,
}

# Factor id -> verb phrases that mark a mention of that factor. Phrases are
# unique to their factor and never appear in noise sentences.
FACTOR_LEXICONS: dict[str, list[str]] = {
    "adverse_childhood_experience": [
        "suffered abuse as a child",
        "endured a traumatic childhood",
    ],
    "civil_legal_problem": [
        "was served with a civil lawsuit",
        "attended a custody dispute hearing",
    ],
    "eviction_or_loss_of_home": [
        "received an eviction notice",
        "was forced out of his housing",
    ],
    "exposure_to_disaster": [
        "lost his house in a flood",
        "survived a tornado that leveled the neighborhood",
    ],
    "financial_problem": [
        "fell behind on his bills",
        "was drowning in debt",
    ],
    "other_addiction": [
        "had a gambling addiction",
        "suffered heavy gambling losses",
    ],
    "other_relationship_problem": [
        "had a falling out with a close friend",
        "was feuding with a longtime associate",
    ],
    "other_substance_abuse": [
        "was using methamphetamine",
        "struggled with a heroin habit",
    ],
    "recent_suicide_of_friend_or_family": [
        "learned that his brother died by suicide",
        "mourned a friend who took his own life",
    ],
    "school_problem": [
        "was failing his classes at school",
        "was suspended from school",
    ],
    "alcohol_problem": [
        "drank heavily every night",
        "relapsed into alcohol dependence",
    ],
    "criminal_legal_problem": [
        "was arrested on criminal charges",
        "faced a pending criminal court date",
    ],
    "family_relationship_problem": [
        "had a bitter argument with his mother",
        "became estranged from his family",
    ],
    "intimate_partner_problem": [
        "separated from his wife",
        "went through a breakup with his girlfriend",
    ],
    "job_problem": [
        "lost his job",
        "was fired from work",
    ],
    "mental_health_problem": [
        "was diagnosed with depression",
        "struggled with severe anxiety",
    ],
    "physical_health_problem": [
        "was suffering from chronic back pain",
        "received a terminal cancer diagnosis",
    ],
    "suicide_disclosure": [
        "told a friend he wanted to end his life",
        "disclosed a plan to kill himself",
    ],
}

_SUBJECTS = ["He", "The victim", "The decedent"]

NOISE_SENTENCES = [
    "Officers responded to the residence in the early morning.",
    "The scene was photographed and documented.",
    "Family members were notified by the investigating agency.",
    "The weather that evening was clear and calm.",
    "Neighbors described the street as quiet.",
    "A routine toxicology screen was ordered.",
    "The report was reviewed and filed the next day.",
    "Emergency personnel arrived within minutes.",
]


class GeneratorError(ValueError):
    """Invalid generator configuration."""


@dataclass(frozen=True)
class GeneratorSpec:
    """Configuration for one deterministic corpus generation run."""

    seed: int
    n_incidents: int
    factor_ids: tuple[str, ...] = ()
    positive_rate: float | Mapping[str, float] = 0.35
    out_of_window_rate: float = 0.2
    noise_rate: float = 0.5
    offset_weights: Mapping[int, float] | None = None

    def rate_for(self, factor_id: str) -> float:
        if isinstance(self.positive_rate, Mapping):
            return self.positive_rate[factor_id]
        return self.positive_rate


def _validate_spec(spec: GeneratorSpec, registry: FactorRegistry) -> tuple[str, ...]:
    if spec.n_incidents < 1:
        raise GeneratorError("n_incidents must be positive")
    factor_ids = spec.factor_ids or tuple(registry.ids())
    if not 0 < spec.noise_rate < 1:
        raise GeneratorError(f"noise_rate must be in (0,1), got {spec.noise_rate}")
    if not 0 < spec.out_of_window_rate < 1:
        raise GeneratorError(f"out_of_window_rate must be in (0,1), got {spec.out_of_window_rate}")
    for factor_id in factor_ids:
        if factor_id not in registry:
            raise GeneratorError(f"unknown factor_id {factor_id!r}")
        if factor_id not in FACTOR_LEXICONS:
            raise GeneratorError(f"no lexicon for factor_id {factor_id!r}")
        rate = spec.rate_for(factor_id)
        if not 0 < rate < 1:
            raise GeneratorError(f"positive rate for {factor_id!r} must be in (0,1), got {rate}")
        if rate + spec.out_of_window_rate >= 1:
            raise GeneratorError(
                f"positive rate + out_of_window_rate must stay below 1 for {factor_id!r}"
            )
    if spec.offset_weights is not None:
        unknown = set(spec.offset_weights) - set(TEMPORAL_PHRASES.values())
        if unknown:
            raise GeneratorError(f"offset_weights for unsupported offsets: {sorted(unknown)}")
    return factor_ids


def _offset_pool(spec: GeneratorSpec, in_window: bool) -> tuple[list[str], list[float]]:
    phrases, weights = [], []
    for phrase, offset in TEMPORAL_PHRASES.items():
        if (offset <= TWO_WEEK_WINDOW_DAYS) != in_window:
            continue
        if spec.offset_weights is not None and offset not in spec.offset_weights:
            continue
        weight = 1.0 if spec.offset_weights is None else spec.offset_weights[offset]
        if weight <= 0:
            continue
        phrases.append(phrase)
        weights.append(weight)
    if not phrases:
        raise GeneratorError(
            f"offset distribution leaves no {'in' if in_window else 'out-of'}-window phrases"
        )
    return phrases, weights


@dataclass
class _Mention:
    factor_id: str
    sentence: str
    offset_days: int
    report: str = ""
    index: int = -1


def _compose_mention(
    rng: random.Random,
    factor_id: str,
    pool: tuple[list[str], list[float]],
    used: set[str],
) -> _Mention | None:
    phrases, weights = pool
    for _ in range(24):
        subject = rng.choice(_SUBJECTS)
        lexeme = rng.choice(FACTOR_LEXICONS[factor_id])
        temporal = rng.choices(phrases, weights=weights, k=1)[0]
        sentence = f"{subject} {lexeme} {temporal}."
        if sentence not in used:
            used.add(sentence)
            return _Mention(factor_id, sentence, TEMPORAL_PHRASES[temporal])
    return None


def generate_corpus(
    spec: GeneratorSpec, registry: FactorRegistry | None = None
) -> tuple[list[IncidentRecord], GoldRelevanceSet]:
    """Generate records plus the full sentence-relevance gold labeling.

    For every generated factor, every sentence of every incident gets a
    binary relevance label: Relevant iff it is a planted mention of that
    factor. Incident gold labels follow the inclusive two-week rule.
    """
    registry = registry or builtin_registry()
    factor_ids = _validate_spec(spec, registry)
    rng = random.Random(spec.seed)
    in_pool = _offset_pool(spec, in_window=True)
    out_pool = _offset_pool(spec, in_window=False)

    records: list[IncidentRecord] = []
    gold = GoldRelevanceSet()
    for i in range(spec.n_incidents):
        incident_id = f"inc-{i:05d}"
        used_sentences: set[str] = set()
        mentions: list[_Mention] = []
        for factor_id in factor_ids:
            rate = spec.rate_for(factor_id)
            u = rng.random()
            plans: list[tuple[list[str], list[float]]] = []
            if u < rate:
                plans.append(in_pool)
                if rng.random() < 0.25:
                    plans.append(out_pool if rng.random() < 0.5 else in_pool)
            elif u < rate + spec.out_of_window_rate:
                plans.append(out_pool)
            for pool in plans:
                mention = _compose_mention(rng, factor_id, pool, used_sentences)
                if mention is not None:
                    mentions.append(mention)

        report_sentences: dict[str, list[str]] = {"cme": [], "le": []}
        for mention in mentions:
            mention.report = rng.choice(("cme", "le"))
            report_sentences[mention.report].append(mention.sentence)
        noise_pool = list(NOISE_SENTENCES)
        rng.shuffle(noise_pool)
        cursor = 0
        for tag in ("cme", "le"):
            n_noise = sum(1 for _ in range(3) if rng.random() < spec.noise_rate)
            if tag == "cme":
                n_noise = max(1, n_noise)  # the CME report is never empty
            take = noise_pool[cursor : cursor + n_noise]
            cursor += n_noise
            report_sentences[tag].extend(take)
            rng.shuffle(report_sentences[tag])

        reports = {tag: " ".join(sents) for tag, sents in report_sentences.items()}
        span_index: dict[str, dict[str, int]] = {}
        for tag in ("cme", "le"):
            spans = segment(tag, reports[tag])
            span_index[tag] = {span.text: span.index for span in spans}
            if len(span_index[tag]) != len(spans):
                raise GeneratorError(f"{incident_id}: duplicate sentence in {tag} report")
        for mention in mentions:
            mention.index = span_index[mention.report][mention.sentence]

        gold_labels = {}
        gold_sentences = {}
        for factor_id in factor_ids:
            planted = [m for m in mentions if m.factor_id == factor_id]
            gold_labels[factor_id] = any(
                m.offset_days <= TWO_WEEK_WINDOW_DAYS for m in planted
            )
            if planted:
                gold_sentences[factor_id] = frozenset((m.report, m.index) for m in planted)
            planted_refs = {(m.report, m.index) for m in planted}
            for tag in ("cme", "le"):
                for index in span_index[tag].values():
                    gold.set_label(
                        incident_id, factor_id, tag, index, (tag, index) in planted_refs
                    )

        records.append(
            IncidentRecord(
                incident_id=incident_id,
                cme_report=reports["cme"],
                le_report=reports["le"],
                gold_labels=gold_labels,
                gold_sentences=gold_sentences or None,
            )
        )
    return records, gold


def normalized_lexicons() -> dict[str, list[str]]:
    """Factor lexicon phrases in matcher-normalized form."""
    return {
        factor_id: [normalize(p) for p in phrases]
        for factor_id, phrases in FACTOR_LEXICONS.items()
    }


def in_window_phrases() -> list[str]:
    """Normalized temporal phrases whose offset falls inside the two-week window."""
    return [
        normalize(p) for p, days in TEMPORAL_PHRASES.items() if days <= TWO_WEEK_WINDOW_DAYS
    ]


def all_temporal_phrases() -> dict[str, int]:
    """Normalized temporal phrase table."""
    return {normalize(p): days for p, days in TEMPORAL_PHRASES.items()}
