#!/usr/bin/env python3
"""Builds crates/core/tests/data/{token_f1,normalize}_cases.json from the
official CoQA/SQuAD answer normalisation and F1 (copied verbatim below),
taking the maximum F1 over the gold answers."""
import collections
import json
import re
import string
from pathlib import Path

OUT = Path(__file__).resolve().parents[2] / "crates" / "core" / "tests" / "data"


def normalize_answer(s):
    def remove_articles(text):
        regex = re.compile(r"\b(a|an|the)\b", re.UNICODE)
        return re.sub(regex, " ", text)

    def white_space_fix(text):
        return " ".join(text.split())

    def remove_punc(text):
        exclude = set(string.punctuation)
        return "".join(ch for ch in text if ch not in exclude)

    def lower(text):
        return text.lower()

    return white_space_fix(remove_articles(remove_punc(lower(s))))


def get_tokens(s):
    if not s:
        return []
    return normalize_answer(s).split()


def compute_f1(a_gold, a_pred):
    gold_toks = get_tokens(a_gold)
    pred_toks = get_tokens(a_pred)
    common = collections.Counter(gold_toks) & collections.Counter(pred_toks)
    num_same = sum(common.values())
    if len(gold_toks) == 0 or len(pred_toks) == 0:
        return float(gold_toks == pred_toks)
    if num_same == 0:
        return 0.0
    precision = 1.0 * num_same / len(pred_toks)
    recall = 1.0 * num_same / len(gold_toks)
    return (2 * precision * recall) / (precision + recall)


F1_CASES = [
    ("Paris", ["Paris"]),
    ("paris", ["Paris"]),
    ("The Eiffel Tower", ["Eiffel Tower"]),
    ("an apple", ["the apple"]),
    ("A dog.", ["dog"]),
    ("in the garden", ["the garden"]),
    ("Buckingham Palace, London", ["Buckingham Palace"]),
    ("", [""]),
    ("", ["something"]),
    ("something", [""]),
    ("the", ["a"]),
    ("yes", ["no"]),
    ("three apples", ["3 apples"]),
    ("New York City", ["New York", "NYC"]),
    ("NYC", ["New York", "NYC"]),
    ("the the the", ["the"]),
    ("red red blue", ["red blue blue"]),
    ("U.S.A.", ["USA"]),
    ("don't", ["dont"]),
    ("rock-and-roll", ["rock and roll"]),
    ("Theatre", ["the atre"]),
    ("another answer", ["an other answer"]),
    ("Anna and the king", ["Anna", "the king"]),
    ("  spaced    out  ", ["spaced out"]),
    ("$5.00", ["5 00", "500"]),
    ("He went to the store to buy milk", ["to buy milk"]),
    ("milk", ["He went to the store to buy milk"]),
    ("café au lait", ["Café au lait"]),
    ("Tab\tseparated\nanswer", ["tab separated answer"]),
    ("a b c d e f g h i j", ["b c d e f g h i j k"]),
]

NORMALIZE_CASES = [
    "Hello, World!", "The quick brown fox", "an Apple a day", "A", "the", "THE END.", "", "   ",
    "It's a trap!", "e.g. this", "Mr. Smith", "3.14159", "100%", "C++ and C#", "(parenthetical)",
    "[brackets] {braces}", "quote \"inside\"", "semi;colon:colon", "slash/back\\slash", "under_score",
    "tilde~caret^", "at@hash#", "ampersand & co", "pipe|line", "<html>", "a.b.c", "then", "another",
    "theater thea the", "an an an", "A-Team", "The, the, the.", "über Café", "naïve façade",
    "multiple   spaces\there", "newline\nsplit", "ÀLL CAPS Ñ", "emoji 🙂 ok", "\u2014dash\u2014", "“smart quotes”",
    "1,000,000", "x*y=z", "question?", "exclaim!", "a's", "the's", "anthem", "atheist", "an-apple", "The_The",
]


def dump(value):
    # Non-ASCII stays literal except dashes, which are escaped.
    return json.dumps(value, indent=1, ensure_ascii=False).replace("\u2014", "\\u2014") + "\n"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    f1 = [{"prediction": p, "gold": g, "expected": max(compute_f1(x, p) for x in g)} for p, g in F1_CASES]
    norm = [{"text": t, "expected": get_tokens(t)} for t in NORMALIZE_CASES]
    assert len(f1) == 30 and len(norm) == 50
    (OUT / "token_f1_cases.json").write_text(dump(f1))
    (OUT / "normalize_cases.json").write_text(dump(norm))


if __name__ == "__main__":
    main()
