#!/usr/bin/env python3
"""Regenerates the offline fixtures under crates/core/fixtures/mock.

Everything is synthetic and seeded, so rerunning produces identical files.
"""
import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "crates" / "core" / "fixtures" / "mock"

NAMES = ["Mara", "Tobias", "Ines", "Kofi", "Lena", "Rafael", "Yuki", "Omar", "Greta", "Sami", "Nadia", "Piet"]
PLACES = ["harbor", "library", "orchard", "market", "bakery", "station", "museum", "garden", "workshop", "chapel"]
COLORS = ["red", "blue", "green", "yellow", "purple", "orange", "grey", "white"]
ANIMALS = ["dog", "cat", "goat", "parrot", "horse", "rabbit", "owl", "fox"]
NATO = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
        "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango"]

ADVANTAGE_MODELS = ["alpha", "beta", "gamma"]
ADVANTAGE_TURNS = 4


def story(rng, i):
    name = NAMES[i % len(NAMES)]
    friend = NAMES[(i + 5) % len(NAMES)]
    place, place2 = rng.sample(PLACES, 2)
    color = rng.choice(COLORS)
    animal = rng.choice(ANIMALS)
    age = rng.randint(20, 70)
    boats = rng.randint(2, 9)
    # Ten distinct words: the fourth answer is long on purpose so token F1
    # can land on exact tenths.
    code = " ".join(rng.sample(NATO, 10))
    text = (
        f"{name} worked at the {place} for many years. Every morning {name} walked there with a {color} {animal}. "
        f"{name} was {age} years old when {friend} arrived from the {place2}. "
        f"The old sign above the door read {code}. "
        f"{friend} brought {boats} small boats as a gift. "
        f"They painted the boats {color} and sold them at the {place2}. "
        f"In the evening {friend} read stories to the {animal}."
    )
    qa = [
        (f"Where did {name} work?", f"the {place}"),
        (f"What animal walked with {name}?", f"a {color} {animal}"),
        ("How old was the worker?", str(age)),
        ("What did the sign above the door read?", code),
        (f"Who arrived from the {place2}?", friend),
        ("How many boats were brought?", str(boats)),
        ("What color were they painted?", color),
        ("Where were they sold?", f"at the {place2}"),
        ("Who read stories in the evening?", friend),
        ("To whom?", f"the {animal}"),
    ]
    return {
        "id": f"story-{i:02d}",
        "source": "synthetic",
        "story": text,
        "questions": [q for q, _ in qa],
        "answers": {"input_text": [a for _, a in qa]},
        "additional_answers": {"0": {"input_text": [a.replace("the ", "") for _, a in qa]}},
    }


def coqa(rng):
    rows = [story(rng, i) for i in range(12)]
    short = story(rng, 12)
    short["id"] = "story-short"
    short["questions"] = short["questions"][:3]
    short["answers"]["input_text"] = short["answers"]["input_text"][:3]
    short["additional_answers"]["0"]["input_text"] = short["additional_answers"]["0"]["input_text"][:3]
    lines = [json.dumps(r, sort_keys=True) for r in rows + [short]]
    lines.append('{"id": "broken", "story": ')
    return rows, "\n".join(lines) + "\n"


def advantage_script(rows):
    """Each model answers the fourth question with 9 of 10 gold words plus a
    stray word (F1 0.9) on its own prefixes and exactly (F1 1.0) after any
    other model's prefix: a +0.1 foreign-prefix advantage."""
    entries = []
    for row in rows:
        gold = row["answers"]["input_text"][ADVANTAGE_TURNS - 1]
        words = gold.split()
        near = " ".join(words[:9] + ["zulu"])
        for m in ADVANTAGE_MODELS:
            entries.append({"model": m, "task": "coqa", "episode_id": row["id"], "turn": ADVANTAGE_TURNS,
                            "text": f"<answer>{near}</answer>"})
            for other in ADVANTAGE_MODELS:
                if other != m:
                    entries.append({"model": m, "task": "coqa", "episode_id": row["id"],
                                    "turn": ADVANTAGE_TURNS, "prefix_author": other,
                                    "text": f"<answer>{gold}</answer>"})
    return json.dumps({"entries": entries}, indent=1, sort_keys=True) + "\n"


def multiif(rng):
    topics = ["a lighthouse", "winter markets", "bicycle repair", "tea ceremonies", "river ferries",
              "city gardens", "old radios", "mountain huts", "paper kites", "street music"]
    turn_sets = [
        (["punctuation:no_comma"], [{}]),
        (["length_constraints:number_words"], [{"relation": "less than", "num_words": 60}]),
        (["change_case:english_lowercase"], [{}]),
        (["detectable_format:number_bullet_lists"], [{"num_bullets": 3}]),
        (["keywords:existence"], [{"keywords": ["harbor", "light"]}]),
        (["startend:end_checker"], [{"end_phrase": "Is there anything else I can help with?"}]),
    ]
    rows = []
    for i, topic in enumerate(topics):
        row = {"key": f"mif-{i:02d}", "language": "English"}
        picks = rng.sample(range(len(turn_sets)), 3)
        for t, k in enumerate(picks, start=1):
            ids, kwargs = turn_sets[k]
            prompt = [f"Write a short note about {topic}.", "Now rewrite it for a child.", "Finally, summarize it."][t - 1]
            row[f"turn_{t}_prompt"] = json.dumps({"role": "user", "content": prompt})
            row[f"turn_{t}_instruction_id_list"] = json.dumps(ids)
            row[f"turn_{t}_kwargs"] = json.dumps([json.dumps(kw) for kw in kwargs])
        rows.append(row)
    french = dict(rows[0], key="mif-fr", language="French")
    unsupported = dict(rows[1], key="mif-lang")
    unsupported["turn_2_instruction_id_list"] = json.dumps(["language:response_language"])
    unsupported["turn_2_kwargs"] = json.dumps([json.dumps({"language": "de"})])
    return "\n".join(json.dumps(r, sort_keys=True) for r in rows + [french, unsupported]) + "\n"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = random.Random(7)
    rows, text = coqa(rng)
    (OUT / "coqa.jsonl").write_text(text)
    (OUT / "advantage_script.json").write_text(advantage_script(rows))
    (OUT / "multiif.jsonl").write_text(multiif(random.Random(11)))


if __name__ == "__main__":
    main()
