"""Independent reference implementations used only to check the library.

These deliberately use the most literal algorithm available (full DP
matrices, explicit character stacks, plain run-length scans) and share no
code with the production paths they verify.
"""

from __future__ import annotations


def levenshtein_matrix(a: str, b: str) -> int:
    """Textbook full-matrix edit distance."""
    rows, cols = len(a) + 1, len(b) + 1
    d = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        d[i][0] = i
    for j in range(cols):
        d[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
    return d[rows - 1][cols - 1]


def similarity_from_matrix(a: str, b: str) -> int:
    """Score via the matrix oracle with explicit half-up rounding."""
    m = max(len(a), len(b))
    if m == 0:
        return 100
    value = 100 * (m - levenshtein_matrix(a, b)) / m
    import math

    return int(math.floor(value + 0.5))


# ---------------------------------------------------------------------------
# Keystroke simulator
# ---------------------------------------------------------------------------

_SIM_BOUNDARY = {"enter", "return", "tab", "escape", "esc"}
_SIM_EDIT = {"backspace", "delete", "del"}
_SIM_CHORD = {"ctrl", "control", "alt", "meta", "cmd", "super", "win"}


def simulate_typing(events, gap_ms):
    """Character-stack simulation of word aggregation.

    `events` is a list of ("key", t, key, modifiers) and ("click", t)
    tuples in time order. Returns (text, t_start, t_end) triples.
    """
    words = []
    stack = []  # (char, t)
    last_t = None

    def emit():
        nonlocal stack
        trimmed = list(stack)
        while trimmed and trimmed[0][0] == " ":
            trimmed = trimmed[1:]
        while trimmed and trimmed[-1][0] == " ":
            trimmed = trimmed[:-1]
        if trimmed:
            words.append(("".join(c for c, _ in trimmed), trimmed[0][1], trimmed[-1][1]))
        stack = []

    for ev in events:
        t = ev[1]
        if last_t is not None and t - last_t > gap_ms:
            emit()
        if ev[0] == "click":
            emit()
            last_t = t
            continue
        key = ev[2]
        mods = {m.lower() for m in ev[3]}
        name = key.lower()
        if name in ("space", "spacebar"):
            key = " "
            name = " "
        if len(key) == 1 and key.isprintable():
            if not (mods & _SIM_CHORD):
                stack.append((key, t))
        elif name in _SIM_EDIT:
            if stack:
                stack.pop()
        elif name in _SIM_BOUNDARY:
            emit()
        last_t = t
    emit()
    return words


# ---------------------------------------------------------------------------
# Run-length interval oracle
# ---------------------------------------------------------------------------


def runs_of_labels(samples):
    """Maximal runs of equal non-None labels over (t, label) samples."""
    runs = []
    prev_label = None
    for t, label in samples:
        if label is None:
            prev_label = None
            continue
        if runs and prev_label == label:
            runs[-1] = (label, runs[-1][1], t)
        else:
            runs.append((label, t, t))
        prev_label = label
    return runs
