from gmpy2 import mpq
from hypothesis import strategies as st

from pilab.mdp import MdpBuilder


@st.composite
def probability_vectors(draw, size, floor=None):
    """``size`` positive rationals summing to one; the last entry is at least ``floor``."""
    weights = draw(st.lists(st.integers(1, 9), min_size=size, max_size=size))
    total = sum(weights)
    vec = [mpq(w, total) for w in weights]
    if floor is not None and vec[-1] < floor:
        vec = [p * (1 - floor) for p in vec[:-1]] + [floor + vec[-1] * (1 - floor)]
    return vec


@st.composite
def small_mdps(draw, max_states=4, max_actions=3, direction="max"):
    """Random MDP where every action leaks at least 1/5 into the sink, so all policies are proper."""
    k = draw(st.integers(1, max_states))
    b = MdpBuilder()
    states = [b.add_state(f"s{i}") for i in range(k)]
    sink = b.add_state("sink", sink=True)
    for s in states:
        for a in range(draw(st.integers(1, max_actions))):
            targets = draw(st.lists(st.sampled_from(states), max_size=2, unique=True))
            probs = draw(probability_vectors(len(targets) + 1, floor=mpq(1, 5)))
            reward = mpq(draw(st.integers(-8, 8)), draw(st.integers(1, 4)))
            b.add_action(s, list(zip(targets + [sink], probs)), reward)
    mdp = b.build(direction=direction)
    return mdp, {s: 0 for s in states}


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
