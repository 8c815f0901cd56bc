"""Shared builders for small hand-rolled datasets."""

from precise.data import Dataset, GOLD, QueryInstance, RankedDoc, UNLABELED


def query_from_probs(qid, split, probs, labels=None):
    docs = []
    for i, p in enumerate(probs):
        docs.append(
            RankedDoc(
                doc_id=f"{qid}-d{i + 1}",
                rank=i + 1,
                prob=float(p),
                gold_relevant=None if labels is None else bool(labels[i]),
            )
        )
    return QueryInstance(query_id=qid, split=split, docs=tuple(docs))


def toy_dataset(gold, unlabeled, k):
    """gold: list of (probs, labels) pairs; unlabeled: list of prob lists."""
    gq = [
        query_from_probs(f"g{i}", GOLD, probs, labels)
        for i, (probs, labels) in enumerate(gold)
    ]
    uq = [query_from_probs(f"u{i}", UNLABELED, probs) for i, probs in enumerate(unlabeled)]
    return Dataset(k=k, gold=gq, unlabeled=uq)
