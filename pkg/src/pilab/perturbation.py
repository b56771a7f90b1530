"""Bounded perturbations of rewards and transition probabilities.

Random mode draws every nonzero number uniformly from a dyadic grid on
[x - sigma, x + sigma] (probabilities: [max(0, p - sigma), p + sigma]) and
renormalizes each probability vector. A draw whose renormalized entries leave
the radius is redrawn, so the output is always within ``sigma`` of the input
coordinate by coordinate. Adversarial mode applies explicit deltas.
"""

from __future__ import annotations

import random
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Union

from gmpy2 import mpq

from .constructions.built import BuiltMdp, GadgetRecord
from .mdp import Action, Mdp
from .rational import ONE, ZERO, RationalLike, format_q, parse_q

Slot = Union[str, int]
DeltaKey = tuple[int, int, Slot]


class StructureMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Random:
    seed: int
    resolution_bits: int = 64


@dataclass(frozen=True)
class Adversarial:
    deltas: Mapping[DeltaKey, mpq] = field(default_factory=dict)


@dataclass(frozen=True)
class PerturbationSpec:
    sigma: mpq
    mode: Random | Adversarial

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if isinstance(self.mode, Adversarial):
            for key, d in self.mode.deltas.items():
                if abs(d) > self.sigma:
                    raise ValueError(f"delta {d} at {key} exceeds sigma {self.sigma}")


def _grid(rng: random.Random, lo: mpq, hi: mpq, bits: int) -> mpq:
    k = rng.randrange((1 << bits) + 1)
    return lo + (hi - lo) * mpq(k, 1 << bits)


MAX_REDRAWS = 1000


def _random_action(act: Action, sigma: mpq, rng: random.Random, bits: int, where) -> Action:
    reward = act.reward
    if reward != 0:
        reward = _grid(rng, reward - sigma, reward + sigma, bits)
    if len(act.transitions) == 1:
        return Action(act.id, reward, act.transitions, act.label)
    probs = [p for _, p in act.transitions]
    for p in probs:
        if p - sigma <= 0:
            raise ValueError(f"probability {p} at {where} would be clamped to 0 by sigma {sigma}")
    for _ in range(MAX_REDRAWS):
        raw = [_grid(rng, p - sigma, p + sigma, bits) for p in probs]
        total = sum(raw, ZERO)
        new = [x / total for x in raw]
        if all(abs(x - p) <= sigma for x, p in zip(new, probs)):
            trans = tuple((t, x) for (t, _), x in zip(act.transitions, new))
            return Action(act.id, reward, trans, act.label)
    raise RuntimeError(f"could not draw a probability vector within sigma at {where}")


def _adversarial_action(act: Action, s: int, deltas: Mapping[DeltaKey, mpq]) -> Action:
    reward = act.reward
    d = deltas.get((s, act.id, "reward"), ZERO)
    if d:
        if reward == 0:
            raise ValueError(f"zero reward at ({s}, {act.id}) cannot be perturbed")
        reward = reward + d
    shifted = [p + deltas.get((s, act.id, k), ZERO) for k, (_, p) in enumerate(act.transitions)]
    if len(shifted) == 1:
        shifted = [ONE]
    total = sum(shifted, ZERO)
    if any(x <= 0 for x in shifted) or total <= 0:
        raise ValueError(f"perturbed probability not positive at ({s}, {act.id})")
    trans = tuple((t, x / total) for (t, _), x in zip(act.transitions, shifted))
    return Action(act.id, reward, trans, act.label)


def perturb(mdp: Mdp, spec: PerturbationSpec) -> Mdp:
    sigma = mpq(spec.sigma)
    if sigma == 0 and isinstance(spec.mode, Random):
        return mdp
    actions = []
    if isinstance(spec.mode, Random):
        rng = random.Random(spec.mode.seed)
        bits = spec.mode.resolution_bits
        for s, acts in enumerate(mdp.actions):
            actions.append(tuple(_random_action(a, sigma, rng, bits, (s, a.id)) for a in acts))
    else:
        for key in spec.mode.deltas:
            s, a, _ = key
            mdp.action(s, a)
        for s, acts in enumerate(mdp.actions):
            actions.append(tuple(_adversarial_action(a, s, spec.mode.deltas) for a in acts))
    return Mdp(mdp.names, tuple(actions), mdp.sinks, dict(mdp.roles), mdp.direction, mdp.criterion)


def within_radius(original: Mdp, perturbed: Mdp, sigma: RationalLike) -> bool:
    """True iff ``perturbed`` moves no reward or probability of ``original`` by more than sigma.

    Raises StructureMismatch if states, actions or transition supports differ.
    """
    sigma = mpq(sigma)
    if original.num_states != perturbed.num_states or original.sinks != perturbed.sinks:
        raise StructureMismatch("state sets differ")
    ok = True
    for s in original.states():
        a_orig, a_pert = original.actions[s], perturbed.actions[s]
        if len(a_orig) != len(a_pert):
            raise StructureMismatch(f"action count differs at state {s}")
        for x, y in zip(a_orig, a_pert):
            if [t for t, _ in x.transitions] != [t for t, _ in y.transitions]:
                raise StructureMismatch(f"support differs at ({s}, {x.id})")
            if x.reward == 0 and y.reward != 0:
                ok = False
            if abs(x.reward - y.reward) > sigma:
                ok = False
            if sum((p for _, p in y.transitions), ZERO) != 1:
                ok = False
            if any(abs(p - q) > sigma for (_, p), (_, q) in zip(x.transitions, y.transitions)):
                ok = False
    return ok


def sample_probabilities(
    count: int, rng: random.Random, center: RationalLike = mpq(1, 2), sigma: RationalLike = mpq(49, 100), bits: int = 64
) -> list[mpq]:
    """``count`` values drawn on the dyadic grid of [center - sigma, center + sigma]."""
    c, s = mpq(center), mpq(sigma)
    return [_grid(rng, c - s, c + s, bits) for _ in range(count)]


# --- adversarial deltas for the gadget construction ---------------------------

STYLES = ("gap", "inflate", "squeeze")


def _grow(mdp: Mdp, rec: GadgetRecord, sign: int, sigma: mpq, out: dict) -> None:
    """Deltas pushing the gadget's effect magnitude up (sign +1) or down (-1)."""
    if rec.kind == "direct":
        act = mdp.action(rec.entry, rec.action)
        out[(rec.entry, rec.action, "reward")] = sign * sigma if act.reward > 0 else -sign * sigma
        return
    if rec.kind in ("g2", "g3"):
        # big reward: larger |r| and harder chain; small reward: larger |r| and easier chain
        chain_sign = -sign if rec.kind == "g2" else sign
        for v in rec.nodes:
            (act,) = mdp.actions[v]
            if act.reward != 0:
                out[(v, act.id, "reward")] = sign * sigma if act.reward > 0 else -sign * sigma
            if len(act.transitions) == 2:
                out[(v, act.id, 0)] = chain_sign * sigma
                out[(v, act.id, 1)] = -chain_sign * sigma
        return
    if rec.kind == "g2-prob":
        for v in rec.nodes:
            out[(v, 0, 0)] = sign * sigma
            out[(v, 0, 1)] = -sign * sigma
        return
    raise ValueError(f"no adversarial rule for {rec.kind}")


def _index(rec: GadgetRecord) -> list[int]:
    return [int(x) for x in rec.param.split(":")[1:] if x.isdigit()]


def adversarial_deltas(built: BuiltMdp, sigma: RationalLike, style: str) -> dict[DeltaKey, mpq]:
    """Hand-built worst cases for the gadget construction.

    ``gap`` shrinks r(i) and inflates c(i), eps, delta_j, p_j and alpha;
    ``inflate`` inflates r(i), eps and delta_j while shrinking c(i), p_j and alpha;
    ``squeeze`` alternates by index so that neighbouring delta_j, p_j and
    bit parameters move toward each other.
    """
    if style not in STYLES:
        raise ValueError(f"style must be one of {STYLES}")
    sigma = mpq(sigma)
    out: dict[DeltaKey, mpq] = {}
    table = {
        "gap": {"r": -1, "c": 1, "eps": 1, "delta": 1, "p": 1, "alpha": 1},
        "inflate": {"r": 1, "c": -1, "eps": 1, "delta": 1, "p": -1, "alpha": -1},
    }
    for rec in built.gadgets:
        kind = rec.param.split(":")[0]
        if style == "squeeze":
            idx = _index(rec)
            last = idx[-1] if idx else 0
            sign = 1 if last % 2 else -1
        else:
            sign = table[style][kind]
        _grow(built.mdp, rec, sign, sigma, out)
    return out


def deltas_to_json(deltas: Mapping[DeltaKey, mpq]) -> dict[str, str]:
    return {f"{s}/{a}/{slot}": format_q(d) for (s, a, slot), d in sorted(deltas.items(), key=str)}


def deltas_from_json(data: Mapping[str, str]) -> dict[DeltaKey, mpq]:
    out = {}
    for key, val in data.items():
        s, a, slot = key.split("/")
        out[(int(s), int(a), int(slot) if slot.isdigit() else slot)] = parse_q(val)
    return out
