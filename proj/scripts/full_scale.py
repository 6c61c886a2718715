#!/usr/bin/env python3
"""Fine-tune a real multilingual checkpoint on the split of an existing run.

Opt-in and not part of the test suite. Needs torch, transformers and
sentencepiece, plus a GPU for reasonable runtimes.

Typical use:

    poly train --corpus augmented.csv --backbone stub-tiny --out runs
    python3 scripts/full_scale.py --corpus augmented.csv --run runs/<dir> \
        --backbone xlmr --out full/xlmr
    poly eval --predictions full/xlmr/predictions

The validation ids are read from <run>/predictions/<lang>.csv; every other
labeled post in the configured languages is used for training. Output files
use the same id,p_positive,pred_label,gold layout as the C++ runner.
"""

import argparse
import csv
import json
import math
import os
import random
import sys

PRESETS = {
    "mbert": dict(checkpoint="bert-base-multilingual-cased", lr=2e-5, batch=16, dropout=0.3, generative=False),
    "xlmr": dict(checkpoint="xlm-roberta-base", lr=3e-5, batch=16, dropout=0.5, generative=False),
    "mt5": dict(checkpoint="google/mt5-base", lr=3e-5, batch=32, dropout=0.5, generative=True),
}
VERBALIZERS = ("non-suicidal", "suicidal")


def read_corpus(path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    labels = {r["source_id"]: int(r["label"]) for r in rows if r.get("label", "") != ""}
    for r in rows:
        if r.get("label", "") == "":
            r["label"] = labels[r["source_id"]]
        r["label"] = int(r["label"])
    return rows


def validation_ids(run_dir):
    ids = {}
    pred_dir = os.path.join(run_dir, "predictions")
    for name in sorted(os.listdir(pred_dir)):
        if not name.endswith(".csv"):
            continue
        with open(os.path.join(pred_dir, name), newline="", encoding="utf-8") as f:
            ids[name[:-4]] = [row["id"] for row in csv.DictReader(f)]
    if not ids:
        sys.exit(f"no predictions/<lang>.csv under {run_dir}")
    return ids


def schedule(step, total, warmup, peak):
    if step < warmup:
        return peak * (step + 1) / warmup
    return peak * max(0.0, (total - step) / max(1, total - warmup))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", required=True)
    ap.add_argument("--run", required=True, help="run directory whose validation split is reused")
    ap.add_argument("--backbone", choices=sorted(PRESETS), required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--max-length", type=int, default=128)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    import torch
    from transformers import (AutoConfig, AutoModelForSeq2SeqLM, AutoModelForSequenceClassification,
                              AutoTokenizer)

    p = PRESETS[args.backbone]
    random.seed(args.seed)
    torch.manual_seed(args.seed)
    device = "cuda" if torch.cuda.is_available() else "cpu"

    rows = read_corpus(args.corpus)
    by_id = {r["id"]: r for r in rows}
    val = validation_ids(args.run)
    held = {i for ids in val.values() for i in ids}
    held_sources = {by_id[i]["source_id"] for i in held}
    train = [r for r in rows if r["lang"] in val and r["source_id"] not in held_sources]

    tok = AutoTokenizer.from_pretrained(p["checkpoint"])
    if p["generative"]:
        model = AutoModelForSeq2SeqLM.from_pretrained(p["checkpoint"], dropout_rate=p["dropout"])
    else:
        conf = AutoConfig.from_pretrained(p["checkpoint"], num_labels=2)
        conf.hidden_dropout_prob = p["dropout"]
        model = AutoModelForSequenceClassification.from_pretrained(p["checkpoint"], config=conf)
    model.to(device)

    def encode(batch):
        return tok([r["text"] for r in batch], padding=True, truncation=True, max_length=args.max_length,
                   return_tensors="pt").to(device)

    def label_ids(labels):
        ids = tok([VERBALIZERS[y] for y in labels], padding=True, return_tensors="pt").input_ids.to(device)
        ids[ids == tok.pad_token_id] = -100
        return ids

    # Sequence log-likelihood of each label string, softmax-normalized.
    def positive_probs(batch):
        enc = encode(batch)
        if not p["generative"]:
            return torch.softmax(model(**enc).logits, dim=-1)[:, 1]
        scores = []
        for y in (0, 1):
            labels = label_ids([y] * len(batch))
            logp = torch.log_softmax(model(**enc, labels=labels).logits, dim=-1)
            mask = labels != -100
            tok_lp = logp.gather(-1, labels.clamp(min=0).unsqueeze(-1)).squeeze(-1)
            scores.append((tok_lp * mask).sum(-1))
        return torch.softmax(torch.stack(scores, dim=-1), dim=-1)[:, 1]

    opt = torch.optim.AdamW(model.parameters(), lr=p["lr"], weight_decay=0.01)
    steps_per_epoch = math.ceil(len(train) / p["batch"])
    total = steps_per_epoch * args.epochs
    warmup = max(1, math.ceil(0.01 * total))
    step = 0
    for epoch in range(args.epochs):
        model.train()
        random.shuffle(train)
        losses = []
        for i in range(0, len(train), p["batch"]):
            batch = train[i:i + p["batch"]]
            gold = torch.tensor([r["label"] for r in batch], device=device)
            if p["generative"]:
                loss = model(**encode(batch), labels=label_ids([r["label"] for r in batch])).loss
            else:
                loss = model(**encode(batch), labels=gold).loss
            for g in opt.param_groups:
                g["lr"] = schedule(step, total, warmup, p["lr"])
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            losses.append(loss.item())
        print(f"epoch {epoch + 1}: mean train loss {sum(losses) / len(losses):.4f}", flush=True)

    model.eval()
    out_dir = os.path.join(args.out, "predictions")
    os.makedirs(out_dir, exist_ok=True)
    with torch.no_grad():
        for lang, ids in val.items():
            posts = [by_id[i] for i in ids]
            with open(os.path.join(out_dir, f"{lang}.csv"), "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["id", "p_positive", "pred_label", "gold"])
                for i in range(0, len(posts), 64):
                    chunk = posts[i:i + 64]
                    for r, prob in zip(chunk, positive_probs(chunk).tolist()):
                        w.writerow([r["id"], repr(prob), int(prob >= 0.5), r["label"]])
    with open(os.path.join(args.out, "full_scale.json"), "w", encoding="utf-8") as f:
        json.dump({"backbone": args.backbone, "checkpoint": p["checkpoint"], "epochs": args.epochs,
                   "seed": args.seed, "run": os.path.abspath(args.run), "train_posts": len(train)}, f, indent=2)


if __name__ == "__main__":
    main()
