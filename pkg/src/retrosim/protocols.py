"""Event-tree builders for the nine Bem protocols and their control variants.

Each protocol is a tree of events in process-time order ending in one
terminal experience ``F``.  The experience label determines its valence for
the observer who has it; only the biased observer's valence tilts Nature's
choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations
from math import comb
from statistics import NormalDist
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

from .bias import check_valence
from .errors import DegenerateInput, ProtocolMalformed
from .histories import Is, Overlap, Same, overlap_size

AGENT = "agent_choice"
RNG = "nature_rng"
STIMULUS = "stimulus"
EXPERIENCE = "experience"
KINDS = (AGENT, RNG, STIMULUS, EXPERIENCE)

PARTICIPANT = "participant"
INDEPENDENT = "independent_observer"

DEFAULT_TREE_CAP = 200_000

__all__ = [
    "AGENT",
    "RNG",
    "STIMULUS",
    "EXPERIENCE",
    "PARTICIPANT",
    "INDEPENDENT",
    "EventNode",
    "ProtocolSpec",
    "ReactionTimeModel",
    "detection_protocol",
    "avoidance_protocol",
    "priming_protocol",
    "habituation_protocol",
    "recall_protocol",
    "falsification_variant",
    "reversed_polarity_variant",
    "single_event_protocol",
    "bem_protocols",
    "build_protocol",
    "BUILDERS",
]


@dataclass(frozen=True)
class EventNode:
    variable: str
    kind: str
    outcomes: tuple[str, ...]
    branch_probabilities: tuple[float, ...]
    children: tuple["EventNode", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "branch_probabilities", tuple(float(p) for p in self.branch_probabilities))
        object.__setattr__(self, "children", tuple(self.children))
        if self.kind not in KINDS:
            raise ProtocolMalformed(f"unknown event kind {self.kind!r}")
        if not self.outcomes or len(self.outcomes) != len(self.branch_probabilities):
            raise ProtocolMalformed(f"event {self.variable!r} needs one probability per outcome")
        if len(set(self.outcomes)) != len(self.outcomes):
            raise ProtocolMalformed(f"event {self.variable!r} repeats an outcome label")
        if any(p < 0 for p in self.branch_probabilities) or abs(sum(self.branch_probabilities) - 1.0) > 1e-12:
            raise ProtocolMalformed(f"branch probabilities of {self.variable!r} must be nonnegative and sum to 1")
        if self.kind == EXPERIENCE:
            if self.children:
                raise ProtocolMalformed("experience events are terminal")
        elif len(self.children) != len(self.outcomes):
            raise ProtocolMalformed(f"event {self.variable!r} must have one child per outcome")


@dataclass(frozen=True)
class ReactionTimeModel:
    base_ms: float = 600.0
    congruency_delta_ms: float = 40.0
    noise_spread_ms: float = 0.0

    def __post_init__(self):
        if self.base_ms <= 0 or self.base_ms + self.congruency_delta_ms <= 0:
            raise DegenerateInput("reaction times must stay positive")
        if self.noise_spread_ms < 0:
            raise DegenerateInput("noise spread must be nonnegative")

    def mean(self, congruent: bool) -> float:
        return self.base_ms + (0.0 if congruent else self.congruency_delta_ms)

    def sample(self, congruent: bool, draw: float) -> float:
        """Reaction time with Gaussian noise, ``draw`` in (0, 1)."""
        t = self.mean(congruent)
        if self.noise_spread_ms:
            t += self.noise_spread_ms * NormalDist().inv_cdf(draw)
        return t


@dataclass(frozen=True)
class ProtocolSpec:
    """A Bem-style experiment: event tree, valences and the statistic it reports.

    ``valence_map`` maps experience labels to the valence felt by
    ``biased_observer``; ``observer_assignment`` says who has each
    experience.  ``hit_event`` given ``hit_condition`` is the protocol's
    headline rate and ``early_variable`` its earliest recorded choice.
    """

    name: str
    root: EventNode
    valence_map: Mapping[str, float]
    observer_assignment: Mapping[str, str]
    hit_event: tuple
    hit_condition: tuple = ()
    early_variable: str = "P"
    biased_observer: str = PARTICIPANT
    params: Mapping[str, object] = field(default_factory=dict)
    reaction_time: ReactionTimeModel | None = None
    variables: tuple[str, ...] = field(init=False, default=(), compare=False)

    def __post_init__(self):
        vmap = {str(k): check_valence(v) for k, v in dict(self.valence_map).items()}
        object.__setattr__(self, "valence_map", MappingProxyType(vmap))
        object.__setattr__(self, "observer_assignment", MappingProxyType(dict(self.observer_assignment)))
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        object.__setattr__(self, "hit_event", tuple(self.hit_event))
        object.__setattr__(self, "hit_condition", tuple(self.hit_condition))
        object.__setattr__(self, "variables", self._validate())

    def _validate(self) -> tuple[str, ...]:
        orders = set()
        stack = [(self.root, ())]
        while stack:
            node, order = stack.pop()
            order = order + (node.variable,)
            if node.variable in order[:-1]:
                raise ProtocolMalformed(f"variable {node.variable!r} repeats along a path")
            if node.kind == EXPERIENCE:
                orders.add(order)
                if node.variable not in self.observer_assignment:
                    raise ProtocolMalformed(f"experience {node.variable!r} has no observer")
                continue
            stack.extend((c, order) for c in node.children)
        if len(orders) != 1:
            raise ProtocolMalformed("all paths must visit the same variables in the same process-time order")
        (order,) = orders
        return order

    @property
    def experience_variable(self) -> str:
        return self.variables[-1]

    def valence_function(self, path: Mapping[str, str]) -> float:
        """Valence of the path's terminal experience for the biased observer."""
        var = self.experience_variable
        if self.observer_assignment.get(var) != self.biased_observer:
            return 0.0
        return self.valence_map.get(path[var], 0.0)

    def reaction_time_ms(self, path: Mapping[str, str]) -> float:
        """Noise-free reaction time of a path; congruent when the word matches the picture."""
        if self.reaction_time is None:
            raise ProtocolMalformed(f"protocol {self.name!r} has no reaction-time model")
        return self.reaction_time.mean(path["Word"] == path["Pic"])

    def describe_hit(self) -> str:
        from .histories import describe

        ev = describe(self.hit_event)
        return ev if not self.hit_condition else f"{ev} | {describe(self.hit_condition)}"


# -- tree construction --------------------------------------------------------

Level = tuple[str, str, "Mapping[str, float] | Callable[[dict], Mapping[str, float]]"]


def _grow(levels: Sequence[Level], experience: Callable[[dict], str], max_leaves: int | None = None) -> EventNode:
    leaves = 0

    def grow(k: int, prefix: dict) -> EventNode:
        nonlocal leaves
        if k == len(levels):
            leaves += 1
            if max_leaves is not None and leaves > max_leaves:
                raise ProtocolMalformed(f"protocol tree exceeds {max_leaves} leaves; reduce its size")
            return EventNode("F", EXPERIENCE, (experience(prefix),), (1.0,))
        var, kind, dist = levels[k]
        dist = dist(prefix) if callable(dist) else dist
        children = tuple(grow(k + 1, {**prefix, var: label}) for label in dist)
        return EventNode(var, kind, tuple(dist), tuple(dist.values()), children)

    return grow(0, {})


def _fair(*labels: str) -> dict[str, float]:
    return {label: 1.0 / len(labels) for label in labels}


def detection_protocol() -> ProtocolSpec:
    """Erotic-picture detection: a picture is behind the screen ``T`` chosen later."""

    def feel(path):
        if path["P"] != path["T"]:
            return "blank"
        return "erotic" if path["S"] == "E" else "neutral"

    root = _grow(
        [("P", AGENT, _fair("L", "R")), ("T", RNG, _fair("L", "R")), ("S", RNG, _fair("E", "N"))],
        feel,
    )
    return ProtocolSpec(
        name="detection",
        root=root,
        valence_map={"erotic": 1.0, "neutral": 0.0, "blank": 0.0},
        observer_assignment={"F": PARTICIPANT},
        hit_event=(Same("P", "T"),),
        hit_condition=(Is("S", "E"),),
    )


def avoidance_protocol() -> ProtocolSpec:
    """Precognitive avoidance: a negative subliminal stimulus follows a miss."""
    root = _grow(
        [
            ("P", AGENT, _fair("A", "B")),
            ("T", RNG, _fair("A", "B")),
            ("S", STIMULUS, lambda path: {"+": 1.0} if path["T"] == path["P"] else {"-": 1.0}),
        ],
        lambda path: "F+" if path["S"] == "+" else "F-",
    )
    return ProtocolSpec(
        name="avoidance",
        root=root,
        valence_map={"F+": 1.0, "F-": -1.0},
        observer_assignment={"F": PARTICIPANT},
        hit_event=(Same("P", "T"),),
    )


def priming_protocol(
    mode: str = "retro", rt: ReactionTimeModel | None = None, congruent_valence: float = 0.5
) -> ProtocolSpec:
    """Affective priming; ``retro`` shows the word after the response, ``normal`` before."""
    if mode not in ("retro", "normal"):
        raise DegenerateInput(f"priming mode must be 'retro' or 'normal', not {mode!r}")
    v_c = check_valence(congruent_valence)
    rt = rt or ReactionTimeModel()
    picture = ("Pic", RNG, _fair("pos", "neg"))
    response = ("Resp", AGENT, lambda path: {"pleasing" if path["Pic"] == "pos" else "displeasing": 1.0})
    word = ("Word", RNG, _fair("pos", "neg"))
    levels = [picture, response, word] if mode == "retro" else [picture, word, response]
    root = _grow(levels, lambda path: "congruent" if path["Word"] == path["Pic"] else "incongruent")
    return ProtocolSpec(
        name=f"priming_{mode}",
        root=root,
        valence_map={"congruent": v_c, "incongruent": -v_c},
        observer_assignment={"F": PARTICIPANT},
        hit_event=(Same("Word", "Pic"),),
        early_variable="Resp",
        params={"mode": mode, "congruent_valence": v_c},
        reaction_time=rt,
    )


def habituation_protocol(v0: float = -0.8, attenuation: float = 0.5) -> ProtocolSpec:
    """Habituation: repeated subliminal exposure blunts the target's valence."""
    v0 = check_valence(v0)
    if not 0.0 < attenuation < 1.0:
        raise DegenerateInput(f"attenuation must lie in (0, 1), got {attenuation}")
    root = _grow(
        [("P", AGENT, _fair("A", "B")), ("T", RNG, _fair("A", "B"))],
        lambda path: "habituated" if path["T"] == path["P"] else "fresh",
    )
    return ProtocolSpec(
        name="habituation",
        root=root,
        valence_map={"habituated": v0 * attenuation, "fresh": v0},
        observer_assignment={"F": PARTICIPANT},
        hit_event=(Same("P", "T"),),
        params={"v0": v0, "attenuation": attenuation},
    )


def recall_protocol(
    n_words: int = 4, n_recall: int = 2, n_targets: int = 2, max_leaves: int = DEFAULT_TREE_CAP
) -> ProtocolSpec:
    """Retroactive recall facilitation over a desk-scale word list.

    The participant recalls ``n_recall`` words, then an RNG picks
    ``n_targets`` targets.  The final feeling grows with the overlap between
    the two sets, measured from its chance expectation.
    """
    if not (0 < n_recall <= n_words and 0 < n_targets <= n_words):
        raise DegenerateInput("need 0 < n_recall, n_targets <= n_words")
    size = comb(n_words, n_recall) * comb(n_words, n_targets)
    if size > max_leaves:
        raise ProtocolMalformed(
            f"recall protocol with {n_words} words has {size} histories, above the cap {max_leaves}; "
            "reduce n_words or use Monte Carlo sampling"
        )
    mu0 = n_recall * n_targets / n_words
    sigma = max(mu0, n_recall - mu0)
    words = [f"w{i}" for i in range(n_words)]

    def subsets(k):
        return _fair(*("+".join(c) for c in combinations(words, k)))

    root = _grow(
        [("R", AGENT, subsets(n_recall)), ("T", RNG, subsets(n_targets))],
        lambda path: f"overlap={overlap_size(path['R'], path['T'])}",
    )
    kmax = min(n_recall, n_targets)
    valences = {f"overlap={k}": min(1.0, max(-1.0, (k - mu0) / sigma)) for k in range(kmax + 1)}
    return ProtocolSpec(
        name="recall",
        root=root,
        valence_map=valences,
        observer_assignment={"F": PARTICIPANT},
        # more targets than non-targets among the recalled words
        hit_event=(Overlap("R", "T", n_recall // 2 + 1),),
        early_variable="R",
        params={"n_words": n_words, "n_recall": n_recall, "n_targets": n_targets, "null_overlap": mu0, "sigma_norm": sigma},
    )


def single_event_protocol(label: str = "seen") -> ProtocolSpec:
    """A lone experience with one possible outcome."""
    return ProtocolSpec(
        name="single_event",
        root=EventNode("F", EXPERIENCE, (label,), (1.0,)),
        valence_map={label: 1.0},
        observer_assignment={"F": PARTICIPANT},
        hit_event=(Is("F", label),),
        early_variable="F",
    )


def falsification_variant(base: ProtocolSpec) -> ProtocolSpec:
    """An independent observer sees the RNG outputs first and owns the final experience."""
    return replace(
        base,
        name=f"{base.name}_falsification",
        observer_assignment={var: INDEPENDENT for var in base.observer_assignment},
    )


def reversed_polarity_variant(base: ProtocolSpec, first_observer: str = "participant_a") -> ProtocolSpec:
    """Two participants share the RNG sequence with opposite stimulus polarity.

    ``participant_a`` feels the base valences and ``participant_b`` their
    negation; Nature's bias follows whoever experiences the outcome first.
    """
    if first_observer not in ("participant_a", "participant_b"):
        raise DegenerateInput("first_observer must be 'participant_a' or 'participant_b'")
    sign = 1.0 if first_observer == "participant_a" else -1.0
    return replace(
        base,
        name=f"{base.name}_reversed_{first_observer}",
        valence_map={k: sign * v for k, v in base.valence_map.items()},
        observer_assignment={var: first_observer for var in base.observer_assignment},
        biased_observer=first_observer,
        params={**base.params, "first_observer": first_observer},
    )


BUILDERS: dict[str, Callable[..., ProtocolSpec]] = {
    "detection": detection_protocol,
    "avoidance": avoidance_protocol,
    "priming": priming_protocol,
    "habituation": habituation_protocol,
    "recall": recall_protocol,
    "single_event": single_event_protocol,
}

VARIANTS = ("base", "falsification", "reversed_a", "reversed_b")


def build_protocol(name: str, params: Mapping[str, object] | None = None, variant: str = "base") -> ProtocolSpec:
    """Build a protocol by name; priming accepts ``base_ms``/``congruency_delta_ms``/``noise_spread_ms``."""
    if name not in BUILDERS:
        raise DegenerateInput(f"unknown protocol {name!r}; choose from {sorted(BUILDERS)}")
    kwargs = dict(params or {})
    if name == "priming":
        rt_keys = ("base_ms", "congruency_delta_ms", "noise_spread_ms")
        rt = {k: kwargs.pop(k) for k in rt_keys if k in kwargs}
        kwargs["rt"] = ReactionTimeModel(**rt)
    try:
        spec = BUILDERS[name](**kwargs)
    except TypeError as exc:
        raise DegenerateInput(f"bad parameters for protocol {name!r}: {exc}") from None
    if variant == "base":
        return spec
    if variant == "falsification":
        return falsification_variant(spec)
    if variant == "reversed_a":
        return reversed_polarity_variant(spec, "participant_a")
    if variant == "reversed_b":
        return reversed_polarity_variant(spec, "participant_b")
    raise DegenerateInput(f"unknown variant {variant!r}; choose from {VARIANTS}")


def bem_protocols() -> dict[str, ProtocolSpec]:
    """The nine experiments at their default (desk-scale) parameters."""
    return {
        "exp1_detection": detection_protocol(),
        "exp2_avoidance": avoidance_protocol(),
        "exp3_priming": priming_protocol("retro"),
        "exp4_priming": priming_protocol("retro"),
        "exp5_habituation_negative": habituation_protocol(-0.8, 0.5),
        "exp6_habituation_erotic": habituation_protocol(0.8, 0.5),
        "exp7_habituation_neutral": habituation_protocol(0.0, 0.5),
        "exp8_recall": recall_protocol(4, 2, 2),
        "exp9_recall": recall_protocol(4, 2, 2),
    }
