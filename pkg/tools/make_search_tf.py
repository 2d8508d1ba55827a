"""Regenerate src/roomagent/scenarios/search_tf.json.

Target placement is a seeded, cell-balanced shuffle: every cell holds the T in
the same number of trials.  A final "popout" trial shows its T in the default
mode as well.
"""

import json
import random
from pathlib import Path

SEED = 11
CELLS = 4
ROUNDS = 4
POPOUT_CELL = 1


def main():
    rng = random.Random(SEED)
    placements = [c for c in range(CELLS) for _ in range(ROUNDS)]
    rng.shuffle(placements)
    coarse = [f"c{i}" for i in range(CELLS)]
    modes = [{"name": "default"}] + [{"name": f"focus{i}"} for i in range(CELLS)]

    def view(t_cell, popout=False):
        row = {"default": coarse + ([f"T{t_cell}", "L_T"] if popout else [])}
        for i in range(CELLS):
            letter = "T" if i == t_cell else "F"
            row[f"focus{i}"] = [f"c{i}", f"{letter}{i}", f"L_{letter}"]
        return row

    states, emissions, transitions = [], {}, {}
    for j, cell in enumerate(placements):
        name = f"trial{j:02d}_T{cell}"
        states.append(name)
        emissions[name] = view(cell)
    states.append("popout")
    emissions["popout"] = view(POPOUT_CELL, popout=True)
    for j, s in enumerate(states):
        transitions[s] = {"next": states[(j + 1) % len(states)], "*": s}

    doc = {
        "name": "search_tf",
        "description": "Find a T among Fs on a 4-cell grid. The default mode only shows where letters are; "
                       "focus(i) shows the letter at cell i.",
        "n_signals": 3 * CELLS + 3,
        "channels": {
            "vision": coarse + [f"T{i}" for i in range(CELLS)] + [f"F{i}" for i in range(CELLS)],
            "label": ["L_T", "L_F"],
        },
        "labels": "label",
        "actions": ["noop", "next"],
        "modes": modes,
        "states": states,
        "transitions": transitions,
        "emissions": emissions,
        "initial": states[0],
        "seed": SEED,
        "script": [a for i in range(CELLS) for a in (f"mode:focus{i}", "mode:default")] + ["next"],
        "tasks": [{"name": "find_T", "targets": [[f"T{i}"] for i in range(CELLS)], "budget": 20}]
        + [{"name": f"check_{i}", "targets": [[f"T{i}"], [f"F{i}"]], "budget": 20} for i in range(CELLS)],
    }
    out = Path(__file__).resolve().parents[1] / "src" / "roomagent" / "scenarios" / "search_tf.json"
    out.write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
