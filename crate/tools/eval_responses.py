"""Writes fixtures/eval/responses.json: three scripted model replies per
corpus record, derived from the record's ground-truth workflow."""

import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "fixtures/eval/corpus.jsonl"
OUT = ROOT / "fixtures/eval/responses.json"


def fenced(text):
    return "Here is a workflow for the repository:\n\n```yaml\n" + text.rstrip("\n") + "\n```\n"


def copy(t):
    return fenced(t)


def bump(old, new):
    def f(t):
        assert old in t, old
        return fenced(t.replace(old, new, 1))
    return f


def drop(line_prefix, count):
    def f(t):
        lines = t.split("\n")
        i = next(i for i, l in enumerate(lines) if l.strip().startswith(line_prefix))
        return fenced("\n".join(lines[:i] + lines[i + count:]))
    return f


def prose(_):
    return "I could not determine how this repository is built. Could you share more details?"


def broken(t):
    return fenced(t.replace("jobs:", "jobs:\n  - broken: [", 1))


def no_runs_on(t):
    lines = [l for l in t.split("\n") if "runs-on:" not in l]
    return fenced("\n".join(lines))


def bare(t):
    return "Sure. Save this as .github/workflows/ci.yml:\n" + t.rstrip("\n") + "\n\nLet me know if you need anything else!"


def comment(t):
    return fenced("# Generated for this repository\n" + t)


PLAN = {
    "acme/java-a": [copy, bump("setup-java@v4", "setup-java@v3"), no_runs_on],
    "acme/java-b": [copy, copy, copy],
    "acme/py-a": [copy, bump("checkout@v2", "checkout@v4"), prose],
    "acme/py-b": [drop("- name: Install tox", 2), copy, broken],
    "acme/js-a": [bare, drop("- run: npm run build", 1), copy],
    "acme/js-c": [comment, bump("yarn test --coverage", "yarn test"), prose],
    "acme/ts-a": [copy, drop("- run: pnpm run typecheck", 1), bare],
    "acme/kt-a": [drop("- name: Grant execute", 2), copy, no_runs_on],
    "acme/cs-a": [copy, bump("dotnet test --no-build --verbosity normal", "dotnet test"), copy],
    "acme/cpp-b": [broken, copy, bump("ctest -C", "ctest --output-on-failure -C")],
}


def main():
    out = {}
    for line in CORPUS.read_text().splitlines():
        record = json.loads(line)
        truth = record["truth_workflow"]
        out[record["repo"]] = [f(truth) for f in PLAN[record["repo"]]]
    OUT.write_text(json.dumps(out, indent=2, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
