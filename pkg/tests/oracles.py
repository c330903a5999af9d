"""Reference implementations used only by the tests."""

import random

from c3cert.omega import DPA


def brute_force_accepts(dpa: DPA, prefix, cycle) -> bool:
    # after n cycles the state at cycle boundaries is periodic with period <= n,
    # so the last n of 3n unrolled cycles cover the whole loop
    n = dpa.n_states
    word = list(prefix) + list(cycle) * (3 * n)
    run = dpa.run(word)
    start = len(prefix) + 2 * n * len(cycle)
    tail = run[start:start + n * len(cycle)]
    return min(dpa.acc(q) for q in tail) % 2 == 0


def random_dpa(rng: random.Random, max_states: int = 5, alphabet=("a", "b")) -> DPA:
    n = rng.randint(1, max_states)
    c = rng.randint(1, 5)
    prio = tuple(rng.randint(1, c) for _ in range(n))
    delta = {(q, a): rng.randint(1, n) for q in range(1, n + 1) for a in alphabet}
    return DPA(tuple(alphabet), n, rng.randint(1, n), prio, delta)


def random_lasso(rng: random.Random, alphabet=("a", "b")):
    prefix = [rng.choice(alphabet) for _ in range(rng.randint(0, 6))]
    cycle = [rng.choice(alphabet) for _ in range(rng.randint(1, 6))]
    return prefix, cycle
