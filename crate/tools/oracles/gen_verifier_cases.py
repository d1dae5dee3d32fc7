#!/usr/bin/env python3
"""Builds crates/core/tests/data/verifier_cases.json: 20 responses per
supported Multi-IF verifier, each labelled by the IFEval reference checker
from lm-evaluation-harness (lm_eval/tasks/ifeval/instructions.py).

Usage: gen_verifier_cases.py /path/to/lm-evaluation-harness

Two deliberate patches to the reference:
  * sentence counting uses the `[.!?]+(\\s+|$)` split rule instead of the
    punkt model (which needs a network download and is not portable);
  * language detection always answers "en" (the case checkers call it as a
    secondary condition; only English rows are evaluated).
"""
import importlib.util
import json
import random
import re
import sys
import types
from pathlib import Path

OUT = Path(__file__).resolve().parents[2] / "crates" / "core" / "tests" / "data" / "verifier_cases.json"


def load_reference(root: Path):
    base = root / "lm_eval" / "tasks" / "ifeval"
    import nltk

    nltk.data.find = lambda *_a, **_k: True  # skip the punkt download check
    fake_langdetect = types.ModuleType("langdetect")
    fake_langdetect.detect = lambda _text: "en"
    sys.modules["langdetect"] = fake_langdetect
    for name in ["lm_eval", "lm_eval.tasks", "lm_eval.tasks.ifeval"]:
        sys.modules.setdefault(name, types.ModuleType(name))

    def load(mod):
        spec = importlib.util.spec_from_file_location(f"lm_eval.tasks.ifeval.{mod}", base / f"{mod}.py")
        m = importlib.util.module_from_spec(spec)
        sys.modules[spec.name] = m
        setattr(sys.modules["lm_eval.tasks.ifeval"], mod, m)
        spec.loader.exec_module(m)
        return m

    util = load("instructions_util")
    split = re.compile(r"[.!?]+(?:\s+|$)")
    util.count_sentences = lambda text: len([s for s in split.split(text) if s.strip()])
    instructions = load("instructions")
    registry = load("instructions_registry")
    return registry.INSTRUCTION_DICT


WORDS = ("river light market stone garden window harbor winter paper candle orchard bridge lantern "
         "meadow signal copper valley thunder velvet morning").split()


def sentence(rng, n=None):
    n = n or rng.randint(3, 9)
    return " ".join(rng.choice(WORDS) for _ in range(n)).capitalize()


def prose(rng, sentences, punct=".!?"):
    return " ".join(sentence(rng) + rng.choice(punct) for _ in range(sentences))


def cases_for(vid, rng):
    out = []
    add = lambda kw, resp: out.append((kw, resp))
    if vid == "keywords:existence":
        for i in range(20):
            kws = rng.sample(WORDS, rng.randint(1, 3))
            text = prose(rng, 3)
            if i % 3 == 0:
                text += " " + " ".join(k.upper() for k in kws) + "."
            elif i % 3 == 1:
                text = text.replace(kws[0], "x")
            add({"keywords": kws}, text)
    elif vid == "keywords:forbidden_words":
        for i in range(20):
            bad = rng.sample(WORDS, 2)
            text = prose(rng, 3)
            if i % 4 == 0:
                text = " ".join(w for w in text.split() if w.lower().strip(".!?") not in bad) or "empty."
            elif i % 4 == 1:
                text += f" {bad[0]}s are nice."  # substring, not whole word
            elif i % 4 == 2:
                text += f" {bad[1].upper()}!"
            add({"forbidden_words": bad}, text)
    elif vid == "keywords:frequency":
        for i in range(20):
            kw = rng.choice(WORDS)
            freq = rng.randint(1, 4)
            rel = rng.choice(["less than", "at least"])
            count = freq + rng.choice([-1, 0, 1])
            text = prose(rng, 2).replace(kw, "y") + " " + " ".join([kw.capitalize()] * max(count, 0)) + "."
            add({"keyword": kw, "frequency": freq, "relation": rel}, text)
    elif vid == "change_case:english_capital":
        for i in range(20):
            text = prose(rng, 2)
            if i % 3 != 2:
                text = text.upper()
            if i % 5 == 0:
                text += " 42 ..."
            if i % 7 == 3:
                text += " ok"
            add({}, text)
    elif vid == "change_case:english_lowercase":
        for i in range(20):
            text = prose(rng, 2)
            if i % 3 != 2:
                text = text.lower()
            if i % 5 == 0:
                text += " 3.14 - (x)"
            if i % 7 == 3:
                text += " Z"
            add({}, text)
    elif vid == "length_constraints:number_words":
        for i in range(20):
            n = rng.randint(5, 40)
            rel = rng.choice(["less than", "at least"])
            words = n + rng.choice([-2, -1, 0, 1, 2])
            text = " ".join(rng.choice(WORDS) for _ in range(max(words, 0)))
            if i % 4 == 0:
                text = text.replace(" ", "-", 2)  # hyphens still split \w+ runs
            if i % 6 == 1:
                text += " don't"
            add({"num_words": n, "relation": rel}, text)
    elif vid == "length_constraints:number_sentences":
        for i in range(20):
            n = rng.randint(1, 6)
            rel = rng.choice(["less than", "at least"])
            k = max(n + rng.choice([-1, 0, 1]), 1)
            text = prose(rng, k)
            if i % 5 == 0:
                text = text.replace(".", "...", 1)
            if i % 7 == 2:
                text += " Version 2.5 shipped"
            add({"num_sentences": n, "relation": rel}, text)
    elif vid == "length_constraints:number_paragraphs":
        for i in range(20):
            n = rng.randint(1, 4)
            k = max(n + rng.choice([-1, 0, 0, 1]), 1)
            paras = [prose(rng, 2) for _ in range(k)]
            sep = rng.choice(["\n***\n", " *** ", "\n\n***\n\n", "***"])
            text = sep.join(paras)
            if i % 6 == 0:
                text += sep  # trailing separator makes an empty paragraph
            if i % 9 == 4:
                text = sep + text
            add({"num_paragraphs": n}, text)
    elif vid == "detectable_format:number_bullet_lists":
        for i in range(20):
            n = rng.randint(1, 5)
            k = max(n + rng.choice([-1, 0, 0, 1]), 0)
            marker = rng.choice(["* ", "- ", "*", "  * "])
            lines = [prose(rng, 1)] + [marker + sentence(rng) for _ in range(k)]
            if i % 5 == 0:
                lines.append("** not a bullet")
            if i % 7 == 1:
                lines.append("-- dash dash")
            add({"num_bullets": n}, "\n".join(lines))
    elif vid == "detectable_format:json_format":
        samples = [
            '{"a": 1}', '```json\n{"a": [1, 2]}\n```', '```JSON\n{"b": true}\n```', '```Json\n[1,2]\n```',
            '```\n{"c": null}\n```', 'Here: {"a": 1}', '{"a": 1,}', '  [1, 2, 3]  ', '"just a string"',
            '42', '{a: 1}', '```json\n{"a": 1}', '{"nested": {"k": "v"}}', 'null', '```json {"a":1} ```',
            'true', '{"a": "b"} trailing', '', '```\n\n```', '[{"x": 1}, {"y": 2}]',
        ]
        for s in samples:
            add({}, s)
    elif vid == "detectable_format:title":
        samples = [
            "<<My Title>>\nBody.", "No title here.", "<<>> empty", "<< >> blank", "Text <<Inner Title>> more",
            "<<Title\nbroken>>", "<<A>>", "<<<Triple>>>", "<Single>", "<<one>> and <<two>>",
            "<<   padded   >>", "title>> <<", "<<tab\there>>", "<<Numbers 123>>", "<<>><<ok>>",
            "<< x>>", "<<x >>", "<<ünïcödé>>", ">><<", "<<a\tb>>",
        ]
        for s in samples:
            add({}, s)
    elif vid == "detectable_format:number_highlighted_sections":
        samples = [
            ("*one*", 1), ("*one* and *two*", 2), ("*one* and *two*", 3), ("**bold**", 1), ("** **", 1),
            ("*a* *b* *c*", 3), ("*\n*", 1), ("no highlights", 1), ("no highlights", 0), ("* spaced *", 1),
            ("*one* and **two**", 2), ("***triple***", 1), ("**", 1), ("*x*y*z*", 2), ("*ab**cd*", 2),
            ("*one*\n*two*\n*three*", 3), ("* *", 1), ("*a*", 2), ("**a** **b**", 2), ("*unclosed", 1),
        ]
        for text, n in samples:
            add({"num_highlights": n}, text)
    elif vid == "startend:quotation":
        samples = [
            '"quoted"', 'not quoted', '"open only', 'close only"', '  "padded"  ', '""', '"', "'single'",
            '"multi\nline"', '“curly”', '"a" b "c"', '\n"newlines"\n', '"x"y', 'x"y"', '"  "', '"inner "quote""',
            '"tab"\t', '\t"tab"', '"."', '"a',
        ]
        for s in samples:
            add({}, s)
    elif vid == "startend:end_checker":
        phrases = ["Is there anything else I can help with?", "Any other questions?", "Peace."]
        for i in range(20):
            p = phrases[i % 3]
            text = prose(rng, 2)
            variant = i % 5
            if variant == 0:
                text += " " + p
            elif variant == 1:
                text += " " + p.lower() + "  \n"
            elif variant == 2:
                text += " " + p + " Thanks."
            elif variant == 3:
                text += " " + p.rstrip("?.")
            else:
                text = "  " + text + " " + p.upper() + "\n"
            add({"end_phrase": p}, text)
    elif vid == "punctuation:no_comma":
        samples = [prose(rng, 2) for _ in range(10)]
        samples += ["a, b", ",", "comma at end,", "no comma here", "full-width ，", "1,000", "", "semi; colon",
                    "ok\n,next", "quote ','"]
        for s in samples:
            add({}, s)
    elif vid == "detectable_content:postscript":
        markers = ["P.S.", "P.P.S", "PS:"]
        for i in range(20):
            m = markers[i % 3]
            text = prose(rng, 2)
            variant = i % 6
            if variant == 0:
                text += f"\n{m} remember the {rng.choice(WORDS)}."
            elif variant == 1:
                text += f"\n{m.lower()} lower case marker"
            elif variant == 2:
                text += f" {m} inline"
            elif variant == 3:
                text += f"\n   {m}"
            elif variant == 4:
                text += f"\n{m.replace('.', '')} without dots"
            add({"postscript_marker": m}, text)
    elif vid == "combination:repeat_prompt":
        for i in range(20):
            prompt = prose(rng, 1)
            answer = prose(rng, 2)
            variant = i % 5
            if variant == 0:
                text = prompt + " " + answer
            elif variant == 1:
                text = prompt.upper() + "\n" + answer
            elif variant == 2:
                text = "  " + prompt + answer
            elif variant == 3:
                text = answer + " " + prompt
            else:
                text = prompt[:-2] + " " + answer
            add({"prompt_to_repeat": prompt}, text)
    else:
        raise SystemExit(f"no case generator for {vid}")
    assert len(out) == 20, (vid, len(out))
    return out


SUPPORTED = [
    "keywords:existence", "keywords:forbidden_words", "keywords:frequency",
    "change_case:english_capital", "change_case:english_lowercase",
    "length_constraints:number_words", "length_constraints:number_sentences",
    "length_constraints:number_paragraphs", "detectable_format:number_bullet_lists",
    "detectable_format:json_format", "detectable_format:title",
    "detectable_format:number_highlighted_sections", "startend:quotation", "startend:end_checker",
    "punctuation:no_comma", "detectable_content:postscript", "combination:repeat_prompt",
]


def main():
    if len(sys.argv) != 2:
        raise SystemExit(__doc__)
    registry = load_reference(Path(sys.argv[1]))
    rng = random.Random(20240601)
    cases = []
    for vid in SUPPORTED:
        for kwargs, response in cases_for(vid, rng):
            inst = registry[vid](vid)
            inst.build_description(**kwargs)
            cases.append({"id": vid, "kwargs": kwargs, "response": response,
                          "expected": bool(inst.check_following(response))})
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(cases, indent=1, ensure_ascii=False) + "\n")
    per = {}
    for c in cases:
        per.setdefault(c["id"], [0, 0])[c["expected"]] += 1
    for vid, (f, t) in per.items():
        print(f"{vid:<48} true {t:>2}  false {f:>2}")


if __name__ == "__main__":
    main()
