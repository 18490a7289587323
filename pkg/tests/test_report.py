"""Damage report assembly: month slicing, attribution, file rendering."""

import random
from decimal import Decimal

import numpy as np
import pytest

from dowsim.engine import PlatformSpec, run, usage_totals
from dowsim.pricing import (MICROS_PER_UNIT, MONTH_MS, compare_platforms,
                            default_pricing_config, monthly_cost)
from dowsim.report import (build_damage_report, write_cost_csv,
                           write_report_csv, write_report_txt)
from dowsim.runtime import DEFAULT_ANCHORS, PayloadSpec, RuntimeCurve
from dowsim.traffic import EventStream, ProfileRef, TrafficKind
from dowsim.waf import WafPolicy, admit

from oracles import oracle_statement_micro

PRICING = default_pricing_config()
CURVE = RuntimeCurve(anchors=DEFAULT_ANCHORS, timeout_ms=300_000.0)
PAYLOAD = PayloadSpec(kind="fixed_runtime", fixed_ms=2950.0)
FLOOD_REF = ProfileRef(name="flood", kind=TrafficKind.FLOOD,
                       payload=PAYLOAD, target="hello")
LEGIT_REF = ProfileRef(name="users", kind=TrafficKind.LEGIT,
                       payload=PAYLOAD, target="hello")


def stream_of(times, profile_idx=None, refs=(FLOOD_REF,)):
    ts = np.asarray(times, dtype=np.int64)
    n = ts.shape[0]
    if profile_idx is None:
        prof = np.zeros(n, dtype=np.int32)
    else:
        prof = np.asarray(profile_idx, dtype=np.int32)
    return EventStream(ts=ts, source=np.zeros(n, dtype=np.int32),
                       ip=np.zeros(n, dtype=np.int32), profile=prof,
                       source_ids=("src-0",), ips=("10.0.0.1",),
                       profiles=tuple(refs))


def platform(**kw):
    base = dict(memory_mb=512, per_replica_capacity_rps=50.0,
                max_replicas=50, min_replicas=1)
    base.update(kw)
    return PlatformSpec(**base)


def simulate(stream, duration_ms, policy=None, plat=None):
    log = admit(stream, policy or WafPolicy(mode="off"))
    return run(log, plat or platform(), CURVE, seed=3, duration_ms=duration_ms)


def report_for(result, duration_ms, factor=1, name="unit"):
    return build_damage_report(result, PRICING, scenario_name=name,
                               extrapolation_factor=factor,
                               duration_ms=duration_ms)


class TestMonthSlicing:
    def test_single_month_run_yields_one_row(self):
        result = simulate(stream_of([0, 1_000, 2_000]), duration_ms=3_600_000)
        rep = report_for(result, 3_600_000)
        assert len(rep.months) == 1
        assert rep.months[0].month == 1
        assert rep.months[0].usage.invocation_count == 3

    def test_arrival_on_boundary_lands_in_second_month(self):
        result = simulate(stream_of([MONTH_MS - 1, MONTH_MS]),
                          duration_ms=MONTH_MS + 60_000)
        rep = report_for(result, MONTH_MS + 60_000)
        assert len(rep.months) == 2
        assert rep.months[0].usage.invocation_count == 1
        assert rep.months[1].usage.invocation_count == 1

    def test_empty_trailing_month_still_reported(self):
        result = simulate(stream_of([0, 1_000]), duration_ms=MONTH_MS + 60_000)
        rep = report_for(result, MONTH_MS + 60_000)
        assert len(rep.months) == 2
        assert rep.months[1].usage.invocation_count == 0
        assert all(st.total_micro == 0 for st in rep.months[1].statements)

    def test_usage_is_extrapolated(self):
        result = simulate(stream_of([0, 1_000, 2_000]), duration_ms=60_000)
        rep = report_for(result, 60_000, factor=1_000)
        expected = usage_totals(result.invocations, 512).scaled(1_000)
        assert rep.months[0].usage == expected
        assert rep.months[0].usage.invocation_count == 3_000

    def test_identical_months_cost_the_same(self):
        # free tiers reset at the 730 h boundary, so a repeat of the same
        # traffic in month 2 bills exactly like month 1
        first = [i * 1_000 for i in range(200)]
        second = [t + MONTH_MS for t in first]
        result = simulate(stream_of(first + second), duration_ms=2 * MONTH_MS)
        rep = report_for(result, 2 * MONTH_MS, factor=10_000)
        assert rep.months[0].usage == rep.months[1].usage
        assert rep.months[0].statements == rep.months[1].statements
        assert rep.months[0].statements[0].total_micro > 0


class TestStatements:
    def test_statements_match_pricing_exactly(self):
        result = simulate(stream_of([i * 100 for i in range(500)]),
                          duration_ms=60_000)
        rep = report_for(result, 60_000, factor=100_000)
        month = rep.months[0]
        assert month.statements == tuple(
            compare_platforms(month.usage, PRICING.models))

    def test_statements_sorted_by_total_descending(self):
        result = simulate(stream_of([i * 100 for i in range(500)]),
                          duration_ms=60_000)
        rep = report_for(result, 60_000, factor=100_000)
        totals = [st.total_micro for st in rep.months[0].statements]
        assert totals == sorted(totals, reverse=True)

    def test_statement_components_match_closed_form(self):
        result = simulate(stream_of([i * 100 for i in range(500)]),
                          duration_ms=60_000)
        rep = report_for(result, 60_000, factor=100_000)
        month = rep.months[0]
        usage = month.usage
        by_name = {m.platform_name: m for m in PRICING.models}
        for st in month.statements:
            want = oracle_statement_micro(
                usage.invocation_count, usage.cumulative_execution_ms,
                512, by_name[st.platform_name])
            assert (st.request_cost_micro, st.compute_cost_micro,
                    st.gateway_cost_micro) == want

    def test_run_totals_sum_months(self):
        first = [i * 1_000 for i in range(100)]
        second = [t + MONTH_MS for t in first]
        result = simulate(stream_of(first + second), duration_ms=2 * MONTH_MS)
        rep = report_for(result, 2 * MONTH_MS, factor=10_000)
        for total in rep.totals:
            parts = [next(st for st in m.statements
                          if st.platform_name == total.platform_name)
                     for m in rep.months]
            assert total.request_cost_micro == sum(p.request_cost_micro for p in parts)
            assert total.compute_cost_micro == sum(p.compute_cost_micro for p in parts)
            assert total.gateway_cost_micro == sum(p.gateway_cost_micro for p in parts)

    def test_single_month_totals_equal_month_statements(self):
        result = simulate(stream_of([0, 1_000]), duration_ms=60_000)
        rep = report_for(result, 60_000, factor=50_000)
        assert rep.totals == rep.months[0].statements


class TestAttribution:
    def test_attacker_cost_is_full_minus_legit(self):
        times = list(range(0, 40_000, 100))
        idx = [i % 2 for i in range(len(times))]  # even: legit, odd: flood
        stream = stream_of(times, profile_idx=idx, refs=(LEGIT_REF, FLOOD_REF))
        result = simulate(stream, duration_ms=60_000)
        rep = report_for(result, 60_000, factor=100_000)

        kinds = np.array([r.kind == TrafficKind.LEGIT
                          for r in result.invocations.profiles])
        legit_mask = kinds[result.invocations.profile]
        legit = usage_totals(result.invocations.subset(legit_mask), 512)
        full = usage_totals(result.invocations, 512)
        for model in PRICING.models:
            want = (monthly_cost(full.scaled(100_000), model).total_micro
                    - monthly_cost(legit.scaled(100_000), model).total_micro)
            got = rep.months[0].attacker_cost_micro[model.platform_name]
            assert got == want
            assert got >= 0

    def test_zero_legit_traffic_attributes_everything(self):
        result = simulate(stream_of([i * 100 for i in range(400)]),
                          duration_ms=60_000)
        rep = report_for(result, 60_000, factor=100_000)
        for st in rep.months[0].statements:
            assert rep.months[0].attacker_cost_micro[st.platform_name] == st.total_micro

    def test_all_legit_traffic_attributes_nothing(self):
        stream = stream_of([i * 100 for i in range(400)], refs=(LEGIT_REF,))
        result = simulate(stream, duration_ms=60_000)
        rep = report_for(result, 60_000, factor=100_000)
        assert all(v == 0 for v in rep.months[0].attacker_cost_micro.values())

    def test_attacker_cost_nonnegative_across_random_mixes(self):
        rnd = random.Random(404)
        for _ in range(30):
            n = rnd.randrange(2, 300)
            times = sorted(rnd.randrange(0, 50_000) for _ in range(n))
            idx = [rnd.randrange(2) for _ in range(n)]
            stream = stream_of(times, profile_idx=idx,
                               refs=(LEGIT_REF, FLOOD_REF))
            result = simulate(stream, duration_ms=60_000)
            factor = rnd.choice([1, 1_000, 100_000])
            rep = report_for(result, 60_000, factor=factor)
            for month in rep.months:
                for cost in month.attacker_cost_micro.values():
                    assert cost >= 0

    def test_run_level_attacker_cost_sums_months(self):
        times = [0, 1_000, MONTH_MS, MONTH_MS + 1_000]
        idx = [0, 1, 0, 1]
        stream = stream_of(times, profile_idx=idx, refs=(LEGIT_REF, FLOOD_REF))
        result = simulate(stream, duration_ms=2 * MONTH_MS)
        rep = report_for(result, 2 * MONTH_MS, factor=100_000)
        for name, total in rep.attacker_cost_micro.items():
            assert total == sum(m.attacker_cost_micro[name] for m in rep.months)


class TestDropAccounting:
    def test_drop_counts_by_disposition(self):
        policy = WafPolicy(mode="static", per_ip_limit=100, window_ms=60_000)
        result = simulate(stream_of(list(range(300))), duration_ms=60_000,
                          policy=policy)
        rep = report_for(result, 60_000)
        assert rep.admitted == 100
        assert rep.dropped == {"dropped_rate_limit": 200,
                               "dropped_adaptive": 0,
                               "dropped_gateway_limit": 0}

    def test_admitted_equals_invocations(self):
        result = simulate(stream_of([i * 50 for i in range(200)]),
                          duration_ms=60_000)
        rep = report_for(result, 60_000)
        assert rep.admitted == len(result.invocations) == 200


class TestReportFiles:
    def _small_report(self, factor=100_000):
        result = simulate(stream_of([i * 100 for i in range(500)]),
                          duration_ms=60_000)
        return report_for(result, 60_000, factor=factor, name="unit")

    def test_report_csv_header_and_shape(self, tmp_path):
        rep = self._small_report()
        path = tmp_path / "report.csv"
        write_report_csv(rep, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("month,platform,invocations,mean_runtime_ms,"
                            "request_cost,compute_cost,gateway_cost,"
                            "total_cost,attacker_cost,extrapolation_factor")
        assert len(lines) == 1 + 4  # one month, four platforms

    def test_report_csv_money_matches_pricing_micro(self, tmp_path):
        rep = self._small_report()
        path = tmp_path / "report.csv"
        write_report_csv(rep, path)
        rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
        month = rep.months[0]
        for row, st in zip(rows, month.statements):
            assert row[0] == "1"
            assert row[1] == st.platform_name
            assert row[2] == str(month.usage.invocation_count)
            assert row[4] == str(Decimal(st.request_cost_micro) / MICROS_PER_UNIT)
            assert row[5] == str(Decimal(st.compute_cost_micro) / MICROS_PER_UNIT)
            assert row[6] == str(Decimal(st.gateway_cost_micro) / MICROS_PER_UNIT)
            assert row[7] == str(Decimal(st.total_micro) / MICROS_PER_UNIT)
            attacker = month.attacker_cost_micro[st.platform_name]
            assert row[8] == str(Decimal(attacker) / MICROS_PER_UNIT)
            assert row[9] == "100000"

    def test_report_csv_mean_runtime_column(self, tmp_path):
        rep = self._small_report()
        path = tmp_path / "report.csv"
        write_report_csv(rep, path)
        row = path.read_text().splitlines()[1].split(",")
        usage = rep.months[0].usage
        mean = usage.cumulative_execution_ms / usage.invocation_count
        assert row[3] == repr(mean)

    def test_report_files_are_deterministic(self, tmp_path):
        rep = self._small_report()
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report_csv(rep, a)
        write_report_csv(rep, b)
        assert a.read_bytes() == b.read_bytes()
        ta, tb = tmp_path / "a.txt", tmp_path / "b.txt"
        write_report_txt(rep, ta)
        write_report_txt(rep, tb)
        assert ta.read_bytes() == tb.read_bytes()

    def test_report_txt_declares_extrapolation(self, tmp_path):
        rep = self._small_report()
        path = tmp_path / "report.txt"
        write_report_txt(rep, path)
        text = path.read_text()
        assert "extrapolation factor: 100000" in text
        assert "unit" in text
        for st in rep.totals:
            assert st.platform_name in text

    def test_cost_csv_rows(self, tmp_path):
        usage = usage_totals(
            simulate(stream_of([0, 1_000]), duration_ms=60_000).invocations,
            512).scaled(1_000_000)
        statements = compare_platforms(usage, PRICING.models)
        path = tmp_path / "cost.csv"
        write_cost_csv(usage, statements, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("platform,invocations,request_cost,compute_cost,"
                            "gateway_cost,total_cost")
        assert len(lines) == 5
        first = lines[1].split(",")
        assert first[0] == statements[0].platform_name
        assert first[1] == str(usage.invocation_count)
        assert first[5] == str(Decimal(statements[0].total_micro) / MICROS_PER_UNIT)
