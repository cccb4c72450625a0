# tests/test_overhead.py
"""付加情報の要素数。"""

import pytest

from semrelay.services.overhead import OverheadReport, importance_count, overhead_table, shared_index_count


def test_pc_hem_sends_no_shared_indices():
    assert shared_index_count("pc-hem", 60, 0.5, 64, 128) == 0
    assert shared_index_count("hem", 60, 0.5, 64, 128) == 0


def test_element_level_indices():
    assert shared_index_count("ed-hem", 60, 0.5, 64, 128) == 245760
    assert shared_index_count("ed-hem", 0, 0.5, 64, 128) == 0


def test_importance_elements():
    assert importance_count("hem", 4, 60, 0.5, 32, 64) == 491520
    assert importance_count("pc-hem", 4, 60, 0.5, 32, 64) == 307200


def test_single_image_has_nothing_to_share():
    assert importance_count("hem", 1, 60, 0.5, 32, 64) == importance_count("pc-hem", 1, 60, 0.5, 32, 64)
    assert importance_count("pc-hem", 1, 60, 0.5, 32, 64) == 60 * 32 * 64


def test_unknown_scheme():
    with pytest.raises(ValueError):
        shared_index_count("lsci", 60, 0.5, 64, 128)
    with pytest.raises(ValueError):
        importance_count("x", 2, 60, 0.5, 64, 128)


def test_report_and_table():
    report = OverheadReport.compute("ed-hem", 2, 60, 0.5, 64, 128)
    assert report.shared_index_elements == 245760
    frame = overhead_table(range(0, 61, 30), image_counts=(2, 4))
    assert len(frame) == 3 * 2 * 3 * 3
    row = frame[(frame.scheme == "hem") & (frame.num_images == 4) & (frame.height == 32) & (frame.channels == 60)]
    assert int(row.importance_elements.iloc[0]) == 491520
