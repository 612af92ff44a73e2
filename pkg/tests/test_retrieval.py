from fractions import Fraction

import numpy as np
import pytest

from src.retrieval import (
    HammingIndex, QuerySet, average_precision_at_k, brute_force_topk, decode_codes, encode_codes, evaluate,
    hamming, map_at_k, mean_hamming_by_class, pack_codes, precision_at_k, query_topk, read_codes,
    read_labels, read_report, reports_frame, unpack_codes, write_codes, write_labels, write_report,
)
from src.utils.errors import FormatError, ShapeError


def random_codes(rng, *shape) -> np.ndarray:
    return np.where(rng.normal(size=shape) >= 0, 1, -1).astype(np.int8)


def map_oracle(db_codes, db_ids, db_labels, q_codes, q_ids, q_labels, k):
    """mAP@k напрямую из определения, на дробях"""
    aps = []
    for code, qid, label in zip(q_codes, q_ids, q_labels):
        candidates = [(int((c != code).sum()), int(i), lab) for c, i, lab in zip(db_codes, db_ids, db_labels)
                      if i != qid]
        relevant_total = sum(1 for _, _, lab in candidates if lab == label)
        if relevant_total == 0:
            continue
        ranked = sorted(candidates)[:k]
        hits, score = 0, Fraction(0)
        for rank, (_, _, lab) in enumerate(ranked, start=1):
            if lab == label:
                hits += 1
                score += Fraction(hits, rank)
        aps.append(score / min(k, relevant_total))
    return float(sum(aps) / len(aps)) if aps else 0.0


def test_hamming_examples(rng):
    a = random_codes(rng, 40)
    assert hamming(a, a) == 0
    assert hamming(a, -a) == 40
    for _ in range(50):
        x, y = random_codes(rng, 2, 77)
        assert hamming(x, y) == sum(1 for i in range(77) if x[i] != y[i])


def test_hamming_is_a_metric(rng):
    for _ in range(50):
        a, b, c = random_codes(rng, 3, 24)
        assert hamming(a, b) == hamming(b, a)
        assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


def test_hamming_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        hamming(random_codes(rng, 8), random_codes(rng, 16))


def test_query_contains_itself(rng):
    codes = random_codes(rng, 12, 32)
    index = HammingIndex(codes, np.arange(100, 112))
    result = index.query(codes[5], 3)
    assert result.ids[0] == 105
    assert result.distances[0] == 0


def test_query_returns_everything_when_k_is_large(rng):
    codes = random_codes(rng, 6, 16)
    index = HammingIndex(codes, [5, 3, 9, 1, 7, 2])
    result = index.query(codes[0], 50)
    assert len(result) == 6
    pairs = list(zip(result.distances.tolist(), result.ids.tolist()))
    assert pairs == sorted(pairs)


def test_query_excludes_id(rng):
    codes = random_codes(rng, 5, 16)
    index = HammingIndex(codes, np.arange(5))
    result = index.query(codes[2], 5, exclude_id=2)
    assert 2 not in result.ids
    assert len(result) == 4


def test_ties_are_broken_by_id():
    codes = np.ones((4, 8), dtype=np.int8)
    index = HammingIndex(codes, [40, 10, 30, 20])
    assert index.query(codes[0], 4).ids.tolist() == [10, 20, 30, 40]


def test_query_matches_brute_force(rng):
    for trial in range(1000):
        k_bits = (16, 32, 64, 128)[trial % 4]
        m = int(rng.integers(1, 25))
        codes = random_codes(rng, m, k_bits)
        ids = rng.choice(10_000, size=m, replace=False)
        q = random_codes(rng, k_bits)
        k = int(rng.integers(1, m + 3))
        result = query_topk(HammingIndex(codes, ids), q, k)
        expected = brute_force_topk(codes, ids, q, k)
        assert result.ids.tolist() == expected.ids.tolist()
        assert result.distances.tolist() == expected.distances.tolist()


def test_map_matches_brute_force(rng):
    for trial in range(1000):
        k_bits = (16, 32, 64, 128)[trial % 4]
        m, q = int(rng.integers(2, 16)), int(rng.integers(1, 6))
        db_codes = random_codes(rng, m, k_bits)
        db_ids = np.arange(m)
        db_labels = rng.integers(3, size=m)
        q_codes = random_codes(rng, q, k_bits)
        q_ids = np.arange(1000, 1000 + q)
        q_labels = rng.integers(3, size=q)
        k = int(rng.integers(1, 8))

        index = HammingIndex(db_codes, db_ids, [{"activity": int(v)} for v in db_labels])
        queries = QuerySet(q_codes, q_ids, [{"activity": int(v)} for v in q_labels])
        expected = map_oracle(db_codes, db_ids, db_labels, q_codes, q_ids, q_labels, k)
        assert map_at_k(queries, index, "activity", k) == pytest.approx(expected, abs=1e-12)


def test_map_is_invariant_to_database_order(rng):
    for _ in range(100):
        m = int(rng.integers(3, 20))
        db_codes = random_codes(rng, m, 32)
        db_ids = rng.permutation(1000)[:m]
        db_labels = [{"activity": int(v)} for v in rng.integers(3, size=m)]
        queries = QuerySet(random_codes(rng, 4, 32), np.arange(5000, 5004),
                           [{"activity": int(v)} for v in rng.integers(3, size=4)])
        base = map_at_k(queries, HammingIndex(db_codes, db_ids, db_labels), "activity", 5)
        order = rng.permutation(m)
        shuffled = HammingIndex(db_codes[order], db_ids[order], [db_labels[i] for i in order])
        assert map_at_k(queries, shuffled, "activity", 5) == base


def test_average_precision_examples():
    assert average_precision_at_k([True, False, True, False, False], 5, 2) == pytest.approx(5 / 6, abs=0)
    assert average_precision_at_k([True, True, True], 3, 10) == 1.0
    assert average_precision_at_k([False, False, False], 3, 4) == 0.0
    with pytest.raises(ValueError):
        average_precision_at_k([True], 1, 0)


def test_evaluate_hand_ranking():
    # запрос совпадает с записью 0; записи 1..4 удаляются на 1..4 бита
    query = np.ones(8, dtype=np.int8)
    codes = np.stack([query.copy() for _ in range(5)])
    for i in range(1, 5):
        codes[i, :i] = -1
    labels = [{"activity": v} for v in (1, 0, 1, 0, 0)]
    index = HammingIndex(codes, np.arange(5), labels)
    queries = QuerySet(query[None], np.array([99]), [{"activity": 1}])
    report = evaluate(queries, index, "activity", 5)
    assert report.value == pytest.approx(5 / 6, abs=1e-15)
    assert report.precision == pytest.approx(2 / 5)
    assert report.metric == "mAP@5"


def test_evaluate_skips_queries_without_relevant_records(rng):
    codes = random_codes(rng, 4, 16)
    index = HammingIndex(codes, np.arange(4), [{"activity": 0}] * 4)
    queries = QuerySet(codes[:2], np.array([10, 11]), [{"activity": 0}, {"activity": 1}])
    report = evaluate(queries, index, "activity", 3)
    assert [q["id"] for q in report.per_query] == [10]
    assert report.value == 1.0
    assert precision_at_k(queries, index, "activity", 4) == 1.0


def test_mixed_set_excludes_self_matches(rng):
    codes = random_codes(rng, 6, 16)
    labels = [{"video-id": i // 2} for i in range(6)]
    index = HammingIndex(codes, np.arange(6), labels)
    report = evaluate(QuerySet(codes, np.arange(6), labels), index, "video-id", 5)
    assert len(report.per_query) == 6
    # единственная релевантная запись - второй клип того же видео
    for entry in report.per_query:
        assert 0.0 < entry["ap"] <= 1.0


def test_index_validation(rng):
    codes = random_codes(rng, 3, 8)
    with pytest.raises(ValueError):
        HammingIndex(codes, [1, 1, 2])
    with pytest.raises(ShapeError):
        HammingIndex(codes, [1, 2])
    empty = HammingIndex(np.zeros((0, 8), dtype=np.int8), [])
    with pytest.raises(ValueError):
        empty.query(codes[0], 1)
    with pytest.raises(ValueError):
        HammingIndex(codes, [1, 2, 3]).query(codes[0], 0)


def test_index_copies_ids(rng):
    ids = np.array([3, 4, 5])
    index = HammingIndex(random_codes(rng, 3, 8), ids)
    ids[0] = 7
    assert index.ids.tolist() == [3, 4, 5]
    assert not index.ids.flags.writeable


def test_mean_hamming_by_class(rng):
    same = np.ones((3, 16), dtype=np.int8)
    index = HammingIndex(same, np.arange(3), [{"activity": 0}] * 3)
    assert mean_hamming_by_class(index, "activity").loc[0, 0] == 0.0

    codes = np.concatenate([np.ones((2, 16)), -np.ones((3, 16))]).astype(np.int8)
    labels = [{"activity": 0}] * 2 + [{"activity": 1}] * 3
    table = mean_hamming_by_class(HammingIndex(codes, np.arange(5), labels), "activity")
    assert table.loc[0, 1] == 16.0
    assert table.loc[1, 0] == 16.0
    assert table.loc[0, 0] == 0.0

    single = mean_hamming_by_class(HammingIndex(codes[:1], [0], labels[:1]), "activity")
    assert np.isnan(single.loc[0, 0])


def test_codes_packing_layout():
    code = -np.ones(12, dtype=np.int8)
    code[0] = code[9] = 1
    packed = pack_codes(code)
    assert packed.tolist() == [0b00000001, 0b00000010]
    assert np.array_equal(unpack_codes(packed, 12), code)
    with pytest.raises(ValueError):
        pack_codes(np.array([1, 0, -1]))


def test_code_file(tmp_path, rng):
    codes = random_codes(rng, 5, 3, 20)
    path = write_codes(tmp_path / "codes.gahc", codes)
    assert path.stat().st_size == 16 + 5 * 3 * 3
    assert np.array_equal(read_codes(path), codes)

    payload = encode_codes(codes)
    with pytest.raises(FormatError):
        decode_codes(b"GAHF" + payload[4:])
    with pytest.raises(FormatError):
        decode_codes(payload[:-1])
    with pytest.raises(ShapeError):
        encode_codes(codes[0])


def test_labels_sidecar(tmp_path):
    labels = [{"activity": 1, "appearance": 0}, {"activity": 2, "appearance": 1}]
    path = write_labels(tmp_path / "codes.labels.json", [7, 3], labels)
    ids, restored = read_labels(path)
    assert ids.tolist() == [7, 3]
    assert restored == labels
    with pytest.raises(ValueError):
        write_labels(tmp_path / "dup.json", [1, 1], labels)
    with pytest.raises(FormatError):
        read_labels(tmp_path / "missing.json")


def test_report_file(tmp_path, rng):
    codes = random_codes(rng, 4, 16)
    index = HammingIndex(codes, np.arange(4), [{"activity": i % 2} for i in range(4)])
    report = evaluate(QuerySet(codes, np.arange(4), index.labels), index, "activity", 2)
    path = write_report(tmp_path / "report.json", report)
    assert read_report(path) == report.to_dict()
    frame = reports_frame([report], layer=0)
    assert frame.loc[0, "metric"] == "mAP@2"
