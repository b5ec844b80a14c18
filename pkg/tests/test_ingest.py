import numpy as np
import pytest

from sbrbench.core import DAY, Session
from sbrbench.ingest import (
    ColumnSpec,
    DataError,
    RawEvent,
    SplitSpec,
    filter_item_support,
    filter_sessions,
    intern_items,
    load_events,
    make_validation_split,
    prune_test,
    random_split,
    read_slice_file,
    session_stats,
    sessionize_by_day,
    sessionize_idle,
    sessionize_playlists,
    single_split,
    sliding_window_split,
    truncate_train,
    write_slice_file,
)
from sbrbench.core import ItemIndex
from sbrbench.ingest import Slice

T0 = 1_400_000_000 - 1_400_000_000 % DAY


def _daily(n_days, per_day=3):
    """Sessions starting at noon of each day, each two events long."""
    out = []
    for d in range(n_days):
        for k in range(per_day):
            t = T0 + d * DAY + 43_200 + 60 * k
            out.append(Session(len(out), (k, k + 1), (t, t + 30)))
    return out


class TestLoad:
    def test_header_and_rows(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("s,i,t\na,x,1\na,y,2\n")
        recs = load_events(p, ColumnSpec("s", "i", "t"))
        assert [(r.key, r.item, r.time) for r in recs] == [("a", "x", 1), ("a", "y", 2)]

    def test_rsc15_layout_iso_time(self, tmp_path):
        p = tmp_path / "clicks.csv"
        p.write_text("SessionId,Timestamp,ItemId\n1,2014-04-07T10:51:09.277Z,214536502\n")
        (rec,) = load_events(p, ColumnSpec("SessionId", "ItemId", "Timestamp", "iso"))
        assert rec.time == 1396867869

    def test_empty_item_names_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("s,i,t\na,x,1\na,,2\n")
        with pytest.raises(DataError, match=":3"):
            load_events(p, ColumnSpec("s", "i", "t"))

    def test_bad_time_and_missing_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("s,i,t\na,x,yesterday\n")
        with pytest.raises(DataError, match="cannot parse time"):
            load_events(p, ColumnSpec("s", "i", "t"))
        with pytest.raises(DataError, match="missing column"):
            load_events(p, ColumnSpec("s", "item", "t"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.csv"):
            load_events(tmp_path / "nope.csv", ColumnSpec("s", "i"))

    def test_event_filter_and_millis(self, tmp_path):
        p = tmp_path / "events.csv"
        p.write_text("timestamp,visitorid,event,itemid\n1000,1,view,5\n2000,1,addtocart,5\n3000,1,view,6\n")
        spec = ColumnSpec("visitorid", "itemid", "timestamp", "epoch_millis", event_column="event", event_value="view")
        assert [r.time for r in load_events(p, spec)] == [1, 3]

    def test_intern(self):
        recs = [RawEvent("a", "X", 1, 2), RawEvent("a", "Y", 2, 3), RawEvent("b", "X", 3, 4)]
        log, idx = intern_items(recs)
        assert [r.item for r in log] == [0, 1, 0] and len(idx) == 2
        assert intern_items([])[1].raw_ids() == []


class TestSessionize:
    def _recs(self, times, key="u"):
        return [RawEvent(key, n, t, n) for n, t in enumerate(times)]

    def test_idle_gaps(self):
        sessions = sessionize_idle(self._recs([0, 10, 7210, 7215]))
        assert [len(s) for s in sessions] == [2, 2]

    def test_idle_boundary_is_strict(self):
        assert len(sessionize_idle(self._recs([0, 1800]))) == 1
        assert len(sessionize_idle(self._recs([0, 1801]))) == 2

    def test_single_event(self):
        assert [len(s) for s in sessionize_idle(self._recs([5]))] == [1]

    def test_by_day(self):
        assert [len(s) for s in sessionize_by_day(self._recs([T0 + 1, T0 + 50, T0 + 900]))] == [3]
        assert len(sessionize_by_day(self._recs([T0 + 1, T0 + DAY + 1]))) == 2

    def test_playlists_use_ordinals(self):
        recs = [RawEvent("p1", 4, None, 2), RawEvent("p2", 1, None, 3), RawEvent("p1", 7, None, 4)]
        sessions = sessionize_playlists(recs)
        assert sessions[0].items == (4, 7) and sessions[0].times == (1, 2)
        assert [s.start_time for s in sessions] == [0, 1]

    def test_filters(self):
        s = [Session(0, (1,), (1,)), Session(1, (1, 2), (1, 2))]
        assert [x.id for x in filter_sessions(s)] == [1]
        assert filter_sessions([]) == []
        kept = filter_item_support([Session(0, (1, 2, 1), (1, 2, 3))], 2)
        assert kept[0].items == (1, 1)


class TestSplits:
    def test_sliding_windows_are_disjoint_and_ordered(self):
        sessions = _daily(20)
        slices = sliding_window_split(sessions, SplitSpec(n_slices=3, train_days=4, test_days=2))
        assert len(slices) == 3
        for sl in slices:
            sl.check()
            assert max(s.end_time for s in sl.train) < min(s.start_time for s in sl.test)
        spans = [(min(s.start_time for s in sl.train), max(s.end_time for s in sl.test)) for sl in slices]
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            assert a1 < b0
        assert [len(sl.test) for sl in slices] == [6, 6, 6]

    def test_too_short_dataset(self):
        with pytest.raises(DataError, match="too short"):
            sliding_window_split(_daily(5), SplitSpec(n_slices=3, train_days=4, test_days=2))

    def test_single_split_last_day(self):
        sl = single_split(_daily(7), 1)
        assert {(s.start_time - T0) // DAY for s in sl.test} == {6}
        assert {(s.start_time - T0) // DAY for s in sl.train} == set(range(6))
        with pytest.raises(DataError):
            single_split(_daily(7), 7)

    def test_random_split(self):
        sessions = _daily(10, per_day=1)
        sl = random_split(sessions, 0.2, seed=4)
        assert len(sl.test) == 2 and len(sl.train) == 8
        assert {s.id for s in sl.train} | {s.id for s in sl.test} == set(range(10))
        again = random_split(sessions, 0.2, seed=4)
        assert [s.id for s in again.test] == [s.id for s in sl.test]

    def test_prune(self):
        train = [Session(0, (0, 1), (1, 2))]
        test = [Session(1, (0, 9), (5, 6)), Session(2, (0, 1), (5, 6)), Session(3, (0, 9, 1), (5, 6, 7))]
        pruned = prune_test(Slice(train, test))
        assert [(s.id, s.items) for s in pruned.test] == [(2, (0, 1)), (3, (0, 1))]

    def test_validation_split_nests(self):
        sessions = _daily(31)
        outer = single_split(sessions, 1)
        val = make_validation_split(outer.train, SplitSpec(mode="single", test_days=1))
        assert {(s.start_time - T0) // DAY for s in val.test} == {29}
        assert {s.id for s in val.test}.isdisjoint({s.id for s in outer.test})
        assert [s.id for s in make_validation_split(outer.train, SplitSpec(mode="single", test_days=1)).test] == [
            s.id for s in val.test
        ]

    def test_truncate(self):
        train = _daily(10)
        test_start = T0 + 10 * DAY
        assert truncate_train(train, 30, test_start) == train
        assert {(s.start_time - T0) // DAY for s in truncate_train(train, 1, test_start)} == {9}
        kept = truncate_train(train, 3, test_start)
        assert kept == [s for s in train if 7 <= (s.start_time - T0) // DAY <= 9]

    def test_split_spec_validation(self):
        with pytest.raises(ValueError):
            SplitSpec(n_slices=0)
        with pytest.raises(ValueError):
            SplitSpec(mode="random", test_fraction=1.0)


class TestCache:
    def test_round_trip(self, tmp_path):
        idx = ItemIndex(["a", "b", "c"])
        sessions = [Session(3, (2, 0), (10, 20)), Session(1, (1, 1, 2), (5, 6, 7))]
        write_slice_file(tmp_path / "s.tsv", sessions, idx)
        lines = (tmp_path / "s.tsv").read_text().splitlines()
        assert lines[0] == "1\tb\t5"
        back = read_slice_file(tmp_path / "s.tsv", ItemIndex())
        assert [(s.id, s.times) for s in back] == [(1, (5, 6, 7)), (3, (10, 20))]

    def test_stats(self):
        stats = session_stats(_daily(2))
        assert stats["sessions"] == 6 and stats["actions"] == 12
