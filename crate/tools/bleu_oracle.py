"""Reference BLEU values for fixtures/bleu/cases.json using NLTK.

Config: uniform weights over orders 1..min(4, len(candidate), len(reference)),
brevity penalty exp(1 - r/c) when c <= r, and epsilon = 1e-9 added to
zero n-gram match counts (NLTK smoothing method1).
"""
import json
import random
import sys

from nltk.translate.bleu_score import SmoothingFunction, sentence_bleu

EPS = 1e-9


def reference_bleu(candidate, reference):
    if not candidate:
        return 0.0
    order = min(4, len(candidate), len(reference))
    weights = tuple([1.0 / order] * order)
    return float(
        sentence_bleu(
            [reference],
            candidate,
            weights=weights,
            smoothing_function=SmoothingFunction(epsilon=EPS).method1,
        )
    )


def build_cases():
    rng = random.Random(20231208)
    cases = [
        (["a", "b", "c", "d"], ["a", "b", "c", "d"]),
        (["a", "b", "c", "d"], ["a", "b", "c", "e"]),
        (["x", "y"], ["a", "b", "c"]),
        (["run:", "pytest", "-q"], ["run:", "pytest"]),
        (["run:", "pytest"], ["run:", "pytest", "-q"]),
        (["run:", "npm", "test"], ["run:", "npm", "run", "test"]),
        (["uses:", "actions/setup-node@v4"], ["uses:", "actions/setup-node@v3"]),
        (["name:", "Build", "run:", "mvn", "-B", "package"], ["name:", "Build", "run:", "mvn", "-B", "package", "--file", "pom.xml"]),
        (["a"], ["a"]),
        (["a"], ["a", "b", "c", "d", "e"]),
        (["a", "a", "a", "a"], ["a", "b"]),
        (["the", "the", "the", "the", "the", "the", "the"], ["the", "cat", "is", "on", "the", "mat"]),
    ]
    vocab = "run: uses: name: npm test build ci install pytest mvn gradle ./gradlew dotnet cmake --build make -q -B".split()
    while len(cases) < 50:
        ref = [rng.choice(vocab) for _ in range(rng.randint(1, 12))]
        mode = rng.random()
        if mode < 0.4:
            cand = list(ref)
            for _ in range(rng.randint(1, 3)):
                op = rng.random()
                if op < 0.4 and cand:
                    cand[rng.randrange(len(cand))] = rng.choice(vocab)
                elif op < 0.7:
                    cand.insert(rng.randint(0, len(cand)), rng.choice(vocab))
                elif len(cand) > 1:
                    del cand[rng.randrange(len(cand))]
        else:
            cand = [rng.choice(vocab) for _ in range(rng.randint(1, 12))]
        cases.append((cand, ref))
    return cases


def main(out_path):
    out = [
        {"candidate": c, "reference": r, "bleu": reference_bleu(c, r)}
        for c, r in build_cases()
    ]
    with open(out_path, "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
