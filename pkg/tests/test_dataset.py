import numpy as np
import pytest

from hierfcst import dataset as ds
from hierfcst.errors import (DomainError, DuplicateKeyError, HierfcstError,
                             ParseError)


def write_csv(path, rows, header="item_id,delivery_period,lead_time,quantity"):
    lines = [header] + rows
    path.write_text("\n".join(lines) + "\n")
    return str(path)


class TestLoadCsv:
    def test_single_record(self, tmp_path):
        p = write_csv(tmp_path / "one.csv", ["A,2,1,5"])
        t = ds.load_csv(p)
        assert t.items == ["A"]
        assert t.n_periods == 3 and t.n_leads == 2
        assert t.values[0, 2, 1] == 5.0
        assert t.observed_mask[0, 2, 1]
        rest = t.values.copy()
        rest[0, 2, 1] = 0.0
        assert np.all(rest == 0)
        assert t.observed_mask.sum() == 1

    def test_duplicate_key_rejected(self, tmp_path):
        p = write_csv(tmp_path / "dup.csv", ["A,2,1,5", "A,2,1,7"])
        with pytest.raises(DuplicateKeyError):
            ds.load_csv(p)

    def test_negative_quantity_rejected(self, tmp_path):
        p = write_csv(tmp_path / "neg.csv", ["A,1,0,-3"])
        with pytest.raises(DomainError):
            ds.load_csv(p)

    def test_malformed_row_carries_line_number(self, tmp_path):
        p = write_csv(tmp_path / "bad.csv", ["A,1,0,5", "B,x,0,1"])
        with pytest.raises(ParseError) as err:
            ds.load_csv(p)
        assert err.value.line_number == 3

    def test_wrong_field_count(self, tmp_path):
        p = write_csv(tmp_path / "short.csv", ["A,1,0"])
        with pytest.raises(ParseError):
            ds.load_csv(p)

    def test_bad_header(self, tmp_path):
        p = write_csv(tmp_path / "hdr.csv", ["A,1,0,5"], header="a,b,c,d")
        with pytest.raises(ParseError) as err:
            ds.load_csv(p)
        assert err.value.line_number == 1

    def test_lead_cap_drops_far_preorders(self, tmp_path):
        p = write_csv(tmp_path / "cap.csv", ["A,1,0,5", "A,9,9,1"])
        t = ds.load_csv(p)  # default cap keeps leads < 4
        assert t.n_leads == 1
        t2 = ds.load_csv(p, max_lead=10)
        assert t2.n_leads == 10

    def test_strict_mode_requires_full_grid(self, tmp_path):
        p = write_csv(tmp_path / "sparse.csv", ["A,0,0,1", "A,1,1,2"])
        with pytest.raises(HierfcstError):
            ds.load_csv(p, missing_as_zero=False)


class TestRoundTrip:
    @pytest.mark.parametrize("regime", ds.REGIMES)
    def test_save_load_identity(self, tmp_path, regime):
        t = ds.synthesize(3, 4, 12, 3, regime)
        path = tmp_path / "out.csv"
        ds.save_csv(t, path)
        back = ds.load_csv(str(path), periods=t.n_periods, leads=t.n_leads)
        assert back.items == t.items
        np.testing.assert_array_equal(back.values, t.values)
        np.testing.assert_array_equal(back.observed_mask, t.observed_mask)

    def test_cache_round_trip(self, tmp_path):
        t = ds.synthesize(1, 3, 8, 2, "smooth")
        path = tmp_path / "t.npz"
        ds.save_cache(t, path)
        back = ds.load_cache(path)
        assert back.items == t.items
        np.testing.assert_array_equal(back.values, t.values)

    def test_cache_version_checked(self, tmp_path):
        path = tmp_path / "bad.npz"
        np.savez(path, cache_version=np.array(999), kind=np.array("preorder_tensor"),
                 items=np.array(["a"]), values=np.zeros((1, 2, 1)),
                 observed_mask=np.ones((1, 2, 1), bool))
        with pytest.raises(HierfcstError):
            ds.load_cache(path)


class TestIsKnownAt:
    @pytest.fixture
    def tensor(self):
        return ds.synthesize(0, 2, 10, 6, "smooth")

    def test_one_period_ahead_known(self, tensor):
        assert ds.is_known_at(tensor, 0, 5, 1, now=4)

    def test_current_period_demand_unknown_beforehand(self, tensor):
        assert not ds.is_known_at(tensor, 0, 5, 0, now=4)

    def test_boundary_exactly_now(self, tensor):
        assert ds.is_known_at(tensor, 0, 5, 5, now=0)

    def test_range_checks(self, tensor):
        with pytest.raises(IndexError):
            ds.is_known_at(tensor, 5, 0, 0, 0)
        with pytest.raises(IndexError):
            ds.is_known_at(tensor, 0, 99, 0, 0)
        with pytest.raises(IndexError):
            ds.is_known_at(tensor, 0, 0, 99, 0)

    def test_monotone_in_now(self, tensor):
        for t in range(tensor.n_periods):
            for h in range(tensor.n_leads):
                flags = [ds.is_known_at(tensor, 0, t, h, now)
                         for now in range(tensor.n_periods)]
                assert flags == sorted(flags)  # False..False,True..True


class TestPreorderRecord:
    def test_valid_record(self):
        r = ds.PreorderRecord("A", 3, 1, 2.5)
        assert r.quantity == 2.5

    def test_invariants_enforced(self):
        with pytest.raises(DomainError):
            ds.PreorderRecord("A", -1, 0, 1.0)
        with pytest.raises(DomainError):
            ds.PreorderRecord("A", 0, -1, 1.0)
        with pytest.raises(DomainError):
            ds.PreorderRecord("A", 0, 0, -1.0)


class TestSynthesize:
    def test_deterministic(self):
        a = ds.synthesize(1, 4, 20, 3, "anticipatory")
        b = ds.synthesize(1, 4, 20, 3, "anticipatory")
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.observed_mask, b.observed_mask)

    def test_seed_changes_output(self):
        a = ds.synthesize(1, 4, 20, 3, "smooth")
        b = ds.synthesize(2, 4, 20, 3, "smooth")
        assert not np.array_equal(a.values, b.values)

    def test_anticipatory_correlation(self):
        t = ds.synthesize(11, 20, 45, 4, "anticipatory")
        for i in range(t.n_items):
            c = np.corrcoef(t.values[i, :, 0], t.values[i, :, 1])[0, 1]
            assert c >= 0.9

    def test_sparse_spiky_zero_fraction(self):
        t = ds.synthesize(5, 10, 45, 4, "sparse-spiky")
        assert t.zero_fraction() >= 0.5
        # zero orders stay unobserved, mirroring missing records
        assert not t.observed_mask[t.values == 0].any()

    def test_bad_arguments(self):
        with pytest.raises(HierfcstError):
            ds.synthesize(0, 0, 5, 2, "smooth")
        with pytest.raises(HierfcstError):
            ds.synthesize(0, 1, 5, 2, "nope")

    def test_quantities_nonnegative(self):
        for regime in ds.REGIMES:
            t = ds.synthesize(9, 3, 30, 4, regime)
            assert np.all(t.values >= 0)
