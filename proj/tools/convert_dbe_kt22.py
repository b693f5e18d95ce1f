#!/usr/bin/env python3
"""Convert the published DBE-KT22 tables into the five-file dataset layout.

Input directory (CSV files from the DBE-KT22 release):
  Transaction.csv                 one row per answer
  Questions.csv                   question text and expert difficulty
  KCs.csv                         knowledge components (concepts)
  Question_KC_Relationships.csv   question -> concept links
  KC_Relationships.csv            concept -> concept edges

Output directory:
  interactions.csv  student_id,question_id,timestamp_ms,response,elapsed_ms,lag_ms
  questions.csv     question_id,type,difficulty,discrimination,activity,text
  concepts.csv      concept_id,area,content_type,text
  edges_cc.csv      src_concept_id,dst_concept_id,relation
  edges_cq.csv      concept_id,question_id

Per student, rows are ordered by start time. elapsed_ms = end - start;
lag_ms = next start - this end (empty on the last row or when negative).
Column names differ between releases; override them with --col name=column.

Usage:
  tools/convert_dbe_kt22.py RAW_DIR OUT_DIR [--col transaction.student=student_id ...]
"""

import argparse
import csv
import html
import re
import sys
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path

COLUMNS = {
    "transaction.student": "student_id",
    "transaction.question": "question_id",
    "transaction.correct": "answer_state",
    "transaction.start": "start_time",
    "transaction.end": "end_time",
    "question.id": "id",
    "question.title": "question_title",
    "question.text": "question_rich_text",
    "question.difficulty": "difficulty",
    "kc.id": "id",
    "kc.name": "name",
    "kc.description": "description",
    "qkc.question": "question_id",
    "qkc.kc": "knowledgecomponent_id",
    "kcrel.src": "from_knowledgecomponent_id",
    "kcrel.dst": "to_knowledgecomponent_id",
}

TRUE = {"1", "true", "t", "yes", "correct"}
FALSE = {"0", "false", "f", "no", "incorrect", "wrong"}


def read(path):
    with open(path, newline="", encoding="utf-8-sig") as f:
        return list(csv.DictReader(f))


def column(rows, key, path, required=True):
    name = COLUMNS[key]
    if rows and name not in rows[0]:
        if not required:
            return None
        sys.exit(f"{path}: no column '{name}' for {key}; columns are {sorted(rows[0])}. Use --col {key}=...")
    return name


def plain(text):
    text = re.sub(r"<[^>]+>", " ", html.unescape(text or ""))
    return re.sub(r"\s+", " ", text).strip()


def millis(value, where):
    value = value.strip()
    try:
        return int(float(value) * (1 if float(value) > 1e11 else 1000))
    except ValueError:
        pass
    try:
        stamp = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        sys.exit(f"{where}: unparsable time '{value}'")
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return int(stamp.timestamp() * 1000)


def response(value, where):
    v = value.strip().lower()
    if v in TRUE:
        return 1
    if v in FALSE:
        return 0
    sys.exit(f"{where}: unparsable answer state '{value}'")


def write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("raw", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--col", action="append", default=[], metavar="KEY=COLUMN")
    args = ap.parse_args()
    for item in args.col:
        key, _, name = item.partition("=")
        if key not in COLUMNS:
            sys.exit(f"unknown column key '{key}'; keys are {sorted(COLUMNS)}")
        COLUMNS[key] = name

    paths = {n: args.raw / f"{n}.csv" for n in
             ("Transaction", "Questions", "KCs", "Question_KC_Relationships", "KC_Relationships")}
    for p in paths.values():
        if not p.exists():
            sys.exit(f"missing {p}")
    tx, qs, kcs = read(paths["Transaction"]), read(paths["Questions"]), read(paths["KCs"])
    qkc, kcrel = read(paths["Question_KC_Relationships"]), read(paths["KC_Relationships"])

    t_student = column(tx, "transaction.student", paths["Transaction"])
    t_question = column(tx, "transaction.question", paths["Transaction"])
    t_correct = column(tx, "transaction.correct", paths["Transaction"])
    t_start = column(tx, "transaction.start", paths["Transaction"])
    t_end = column(tx, "transaction.end", paths["Transaction"], required=False)

    by_student = defaultdict(list)
    for i, row in enumerate(tx, start=2):
        where = f"{paths['Transaction']}:{i}"
        start = millis(row[t_start], where)
        end = millis(row[t_end], where) if t_end and row[t_end].strip() else None
        by_student[row[t_student].strip()].append(
            (start, end, row[t_question].strip(), response(row[t_correct], where)))

    interactions = []
    for student in sorted(by_student):
        seq = sorted(by_student[student], key=lambda r: r[0])
        for k, (start, end, question, resp) in enumerate(seq):
            elapsed = end - start if end is not None and end >= start else ""
            lag = ""
            if end is not None and k + 1 < len(seq) and seq[k + 1][0] >= end:
                lag = seq[k + 1][0] - end
            interactions.append([student, question, start, resp, elapsed, lag])

    q_id = column(qs, "question.id", paths["Questions"])
    q_title = column(qs, "question.title", paths["Questions"], required=False)
    q_text = column(qs, "question.text", paths["Questions"], required=False)
    q_diff = column(qs, "question.difficulty", paths["Questions"], required=False)
    questions = []
    for row in qs:
        text = " ".join(t for t in (plain(row[q_title]) if q_title else "", plain(row[q_text]) if q_text else "") if t)
        questions.append([row[q_id].strip(), "", row[q_diff].strip() if q_diff else "", "", "", text])

    k_id = column(kcs, "kc.id", paths["KCs"])
    k_name = column(kcs, "kc.name", paths["KCs"], required=False)
    k_desc = column(kcs, "kc.description", paths["KCs"], required=False)
    concepts = []
    for row in kcs:
        text = " ".join(t for t in (plain(row[k_name]) if k_name else "", plain(row[k_desc]) if k_desc else "") if t)
        concepts.append([row[k_id].strip(), "", "", text])

    c_src = column(kcrel, "kcrel.src", paths["KC_Relationships"])
    c_dst = column(kcrel, "kcrel.dst", paths["KC_Relationships"])
    edges_cc = sorted({(r[c_src].strip(), r[c_dst].strip()) for r in kcrel if r[c_src].strip() != r[c_dst].strip()})
    l_q = column(qkc, "qkc.question", paths["Question_KC_Relationships"])
    l_k = column(qkc, "qkc.kc", paths["Question_KC_Relationships"])
    seen, edges_cq = set(), []
    for r in qkc:
        pair = (r[l_k].strip(), r[l_q].strip())
        if pair not in seen:
            seen.add(pair)
            edges_cq.append(list(pair))

    args.out.mkdir(parents=True, exist_ok=True)
    write(args.out / "interactions.csv", ["student_id", "question_id", "timestamp_ms", "response", "elapsed_ms", "lag_ms"],
          interactions)
    write(args.out / "questions.csv", ["question_id", "type", "difficulty", "discrimination", "activity", "text"], questions)
    write(args.out / "concepts.csv", ["concept_id", "area", "content_type", "text"], concepts)
    write(args.out / "edges_cc.csv", ["src_concept_id", "dst_concept_id", "relation"],
          [[a, b, "related"] for a, b in edges_cc])
    write(args.out / "edges_cq.csv", ["concept_id", "question_id"], edges_cq)
    correct = sum(r[3] for r in interactions)
    print(f"{len(questions)} questions, {len(concepts)} concepts, {len(by_student)} students, "
          f"{len(interactions)} interactions, {100.0 * correct / max(1, len(interactions)):.2f}% correct")


if __name__ == "__main__":
    main()
