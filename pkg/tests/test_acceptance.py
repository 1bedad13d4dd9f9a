"""Acceptance criteria; each test prints and records one PASS/FAIL line."""

import itertools
import random
import time
from contextlib import contextmanager
from dataclasses import replace

from oblivio.cli import main
from oblivio.corpus import WELL_TYPED, scenario, scenario_names
from oblivio.harness import ni_differential_test, randomized_overhead
from oblivio.interpreter import EMPTY_HISTORY, run_handler, initial_store
from oblivio.netsim import local_env_for, run_simulation
from oblivio.syntax import BaseType
from oblivio.typesystem import (ErrorKind, build_lambda, check_system, envs_for,
                                handler_minimums, system_lattice)
from oblivio.values import CtCounters, SizedValue, safe_concat, safe_eq, safe_select

from conftest import ACCEPTANCE_LINES

S = SizedValue


@contextmanager
def criterion(n, title):
    info = {}
    ok = False
    try:
        yield info
        ok = True
    finally:
        detail = info.get("detail", "")
        line = f"criterion {n} ({title}): {'PASS' if ok else 'FAIL'}" + (f"; {detail}" if detail
                                                                          else "")
        ACCEPTANCE_LINES[n] = line
        print(line)


def test_criterion_1_type_checker_corpus():
    with criterion(1, "type-checker corpus") as info:
        progs = scenario("auction").programs
        assert check_system(progs) == []
        lam = build_lambda(progs)
        pots = {ch: ct.potential for ch, ct in lam.items()}
        expected = {ch: (1 if ch.endswith("/TO_LEAD") else 4 if ch.endswith("/TICK") else 0)
                    for ch in lam}
        assert pots == expected
        house = next(p for p in progs if p.node == "AUCTIONHOUSE")
        assert handler_minimums(house, envs_for(house, lam))["TICK"] == 4

        pingpong = scenario("pingpong").programs
        start = time.perf_counter()
        for a, b in itertools.product(range(11), repeat=2):
            pots = {"PING": a, "PONG": b}
            ps = [replace(p, handlers=tuple(replace(h, potential=pots[h.name])
                                            for h in p.handlers)) for p in pingpong]
            errs = check_system(ps)
            assert any(e.kind is ErrorKind.POTENTIAL_DEFICIT for e in errs), (a, b)
        sweep = time.perf_counter() - start
        assert sweep < 1.0

        chat = scenario("chat").programs
        assert check_system(chat) == []
        assert all(h.potential == 0 for p in chat for h in p.handlers)
        info["detail"] = f"TICK min=4, 121 PING/PONG pairs rejected in {sweep:.3f}s, chat at $0"


def sized_strings(alphabet="abc", max_len=3, max_size=5):
    return [S("".join(c), z) for n in range(max_len + 1)
            for c in itertools.product(alphabet, repeat=n) for z in range(n, max_size + 1)]


def test_criterion_2_constant_time_oracles():
    with criterion(2, "constant-time oracle equivalence") as info:
        vals = sized_strings()
        start = time.perf_counter()
        cases = 0
        for a, b in itertools.product(vals, repeat=2):
            assert safe_eq(a, b) == int(a.base == b.base)
            assert safe_concat(a, b) == S(a.base + b.base, a.size + b.size)
            for bit in (0, 1):
                assert safe_select(bit, a, b) == S(b.base if bit else a.base,
                                                   max(a.size, b.size))
            cases += 1
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0
        info["detail"] = f"{cases} operand pairs, exact, {elapsed:.2f}s"


def test_criterion_3_content_independence():
    with criterion(3, "content independence") as info:
        rng = random.Random(2024)

        def rand_str(z):
            n = rng.randint(0, z)
            return S("".join(rng.choice("abcxyz") for _ in range(n)), z)

        def counts(f, *args):
            c = CtCounters()
            f(*args, c)
            return c.as_tuple()

        pairs = 0
        while pairs < 1000:
            z1, z2 = rng.randint(0, 12), rng.randint(0, 12)
            a1, b1, a2, b2 = rand_str(z1), rand_str(z2), rand_str(z1), rand_str(z2)
            if (a1.base, b1.base) == (a2.base, b2.base):
                continue
            assert counts(safe_eq, a1, b1) == counts(safe_eq, a2, b2)
            assert counts(safe_concat, a1, b1) == counts(safe_concat, a2, b2)
            assert counts(safe_select, rng.randint(0, 1), a1, b1) == \
                   counts(safe_select, rng.randint(0, 1), a2, b2)
            i1, i2 = S.of(rng.randint(-99, 99)), S.of(rng.randint(-99, 99))
            assert counts(safe_select, 0, i1, i2) == counts(safe_select, 1, i2, i1)
            pairs += 1
        info["detail"] = f"{pairs} content-differing pairs, identical counters"


def test_criterion_4_noninterference():
    with criterion(4, "noninterference") as info:
        start = time.perf_counter()
        runs = 0
        for name in WELL_TYPED:
            sc = scenario(name)
            for adv in ("L", "H"):
                rep = ni_differential_test(sc.nodes, adv, trials=100, seed=f"{name}-{adv}",
                                           name=name, budget=sc.budget)
                assert rep.passed, rep.render()
                assert rep.trials == 100
                runs += 1
        leaky = scenario("transfer")
        rep = ni_differential_test(leaky.nodes, "L", trials=100, seed="transfer",
                                   budget=leaky.budget, unchecked=True)
        assert not rep.passed
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0
        info["detail"] = (f"{runs} x 100 trials equivalent over {', '.join(WELL_TYPED)}; "
                          f"transfer leaks at trial {rep.counterexample['trial']}; "
                          f"{elapsed:.1f}s")


def test_criterion_5_overhead():
    with criterion(5, "overhead bound") as info:
        sc = scenario("auction")
        ratios, injected = [], 0
        for k in range(10):
            extended, rep = randomized_overhead(sc.nodes, seed=k)
            assert rep.bound_factor == 5
            assert rep.passed, rep.render()
            for row in rep.per_node.values():
                assert row["extension"] and row["safe"] <= row["unsafe"] * 5
            ratios.append(rep.ratio)
            injected += sum(m.bit == 0 for _, s in extended for m in s.net)
        assert injected > 0
        info["detail"] = (f"10 schedules, {injected} injected dummies, "
                          f"max ratio {max(ratios):.3f} <= 5")


def phantom_cases():
    out = []
    for name in WELL_TYPED:
        sc = scenario(name)
        lam = build_lambda(sc.programs)
        lat = system_lattice(sc.programs)
        for p, script in sc.nodes:
            for h in p.handlers:
                if not lat.is_bottom(h.mode):
                    out.append((p, h, lam, lat, script))
    return out


def random_value(rng, base_type, size=None):
    if base_type is BaseType.INT:
        return S.of(rng.randint(-1000, 1000))
    s = "".join(rng.choice("abc") for _ in range(rng.randint(0, 6)))
    return S(s, size if size is not None and size >= len(s) else len(s) + rng.randint(0, 4))


def test_criterion_6_phantom_frame():
    with criterion(6, "phantom frame") as info:
        rng = random.Random(6)
        cases = phantom_cases()
        steps_total = 0
        for _ in range(100):
            p, h, lam, lat, script = rng.choice(cases)
            store = {}
            for v in p.globals:
                store[v.name] = random_value(rng, v.type.base)
            arg = random_value(rng, h.param_type.base)
            local = local_env_for(p, script)
            violations = []

            def check(before, after, ev):
                if before.top != 0:
                    violations.append("real-mode step in a dummy-triggered run")
                if after.mem != before.mem:
                    violations.append("memory changed")
                if after.local != before.local:
                    violations.append("local environment changed")
                for x, v in before.store.items():
                    w = after.store[x]
                    if w.base != v.base or w.size < v.size:
                        violations.append(f"store update of {x}: {v} -> {w}")
                if ev is not None:
                    if ev.bit != 0:
                        violations.append(f"genuine emission on {ev.channel}")
                    if lat.is_bottom(lam[ev.channel].mode):
                        violations.append(f"dummy on public-mode channel {ev.channel}")

            res = run_handler(0, h.body, h.param, arg, store, local, EMPTY_HISTORY,
                              watchdog=10_000, on_step=check)
            assert violations == [], (p.node, h.name, violations)
            assert res.local == local
            steps_total += res.steps
        info["detail"] = f"100 dummy-triggered runs over {len(cases)} handlers, {steps_total} steps"


def test_criterion_7_determinism_and_clock(tmp_path, capsys):
    with criterion(7, "determinism and clock") as info:
        events = 0
        for name in WELL_TYPED:
            logs = []
            for k in range(2):
                out = tmp_path / f"{name}-{k}.log"
                assert main(["simulate", "--scenario", name, "--out", str(out)]) == 0
                logs.append(out.read_bytes())
            assert logs[0] == logs[1] and logs[0]
            sc = scenario(name)
            for scheduler in ("round-robin", "fifo"):
                r = run_simulation(sc.nodes, scheduler, sc.budget)
                for res in r.nodes.values():
                    h = res.history
                    while h.event is not None:
                        assert h.prev.time < h.time
                        events += 1
                        h = h.prev
        info["detail"] = f"byte-identical logs for {len(WELL_TYPED)} scenarios; " \
                         f"{events} history appends, clock strictly increasing"


def test_criterion_8_monitor():
    with criterion(8, "pc-stack monitor") as info:
        runs = 0
        for name in scenario_names():
            sc = scenario(name)
            for scheduler in ("round-robin", "fifo"):
                r = run_simulation(sc.nodes, scheduler, sc.budget, monitor=True,
                                   checked=sc.well_typed)
                assert r.status in ("quiescent", "budget")
                runs += 1
        info["detail"] = f"{runs} monitored simulations, zero stack assertion failures"
