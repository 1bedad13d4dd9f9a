"""Bundled example programs and the scenarios that drive them."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Optional

from ..frontend import EMPTY_STRATEGY, StrategyScript, parse_program, parse_strategy


@dataclass(frozen=True)
class Scenario:
    name: str
    nodes: tuple  # ((Program, StrategyScript), ...)
    budget: Optional[int] = None
    well_typed: bool = True

    @property
    def programs(self):
        return [p for p, _ in self.nodes]


# name -> (files, step budget, well typed)
_SCENARIOS = {
    "auction": (("auction_alice", "auction_bob", "auction_timer", "auction_house"), None, True),
    "chat": (("chat_alice", "chat_bob"), 800, True),
    "ring": (("ring_alice", "ring_bob", "ring_carol"), 1200, True),
    "fanout": (("fanout_alice", "fanout_bob"), None, True),
    "pingpong": (("ping", "pong"), 2000, False),
    "transfer": (("transfer_bank", "transfer_client"), None, False),
}

WELL_TYPED = tuple(n for n, (_, _, ok) in _SCENARIOS.items() if ok)


def corpus_text(filename: str) -> str:
    return resources.files("oblivio.corpus").joinpath(filename).read_text(encoding="utf-8")


def corpus_files():
    return sorted(f.name for f in resources.files("oblivio.corpus").iterdir()
                  if f.name.endswith(".oblivio"))


def load_program(stem: str):
    return parse_program(corpus_text(f"{stem}.oblivio"))


def load_strategy(stem: str) -> StrategyScript:
    f = resources.files("oblivio.corpus").joinpath(f"{stem}.strategy.json")
    if not f.is_file():
        return EMPTY_STRATEGY
    return parse_strategy(f.read_text(encoding="utf-8"))


def scenario(name: str) -> Scenario:
    try:
        stems, budget, ok = _SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(_SCENARIOS)}") from None
    nodes = tuple((load_program(s), load_strategy(s)) for s in stems)
    return Scenario(name, nodes, budget, ok)


def scenario_names():
    return tuple(_SCENARIOS)


def scenario_files(name: str):
    """Corpus file names (program, strategy or None) making up ``name``."""
    stems, _, _ = _SCENARIOS[name]
    out = []
    for s in stems:
        strat = f"{s}.strategy.json"
        has = resources.files("oblivio.corpus").joinpath(strat).is_file()
        out.append((f"{s}.oblivio", strat if has else None))
    return out
