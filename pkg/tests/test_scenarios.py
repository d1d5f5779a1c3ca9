"""Scenario files: validation diagnostics, replay determinism, reports."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import pytest

from usbips.errors import ScenarioInvalid
from usbips.scenario import load_scenario, run_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
ALL_FILES = sorted(SCENARIOS.glob("*.json"))


def minimal_doc() -> dict:
    return {
        "name": "minimal",
        "seed": 1,
        "devices": [
            {
                "label": "kb",
                "decision": "refuse",
                "descriptor": {
                    "interfaces": [{"class_guid": "4d1e55b2-f16f-11cf-88cb-001111000030"}],
                    "bus_type": "usb",
                    "vendor_id": "V",
                    "product_id": "P",
                    "product_rev": "1",
                    "serial_number": "S1",
                    "full_serial": "USB\\V&P\\S1",
                },
                "script": [{"kind": "keystroke", "symbol": "a", "at": 1}],
            }
        ],
        "schedule": [{"op": "plug", "device": "kb"}, {"op": "step", "until": 2}],
        "expect": {"device_decisions": {"kb": "blocked"}},
    }


class TestValidation:
    def test_minimal_scenario_loads(self):
        scenario = load_scenario(minimal_doc())
        assert scenario.name == "minimal"
        assert set(scenario.devices) == {"kb"}

    @pytest.mark.parametrize(
        "mutate, fragment",
        [
            (lambda d: d.pop("name"), "name"),
            (lambda d: d["devices"][0].pop("label"), "label"),
            (lambda d: d["devices"][0].pop("descriptor"), "descriptor"),
            (lambda d: d["devices"][0].update(decision="maybe"), "decision"),
            (lambda d: d["devices"][0]["script"].append({"kind": "warp", "at": 3}), "warp"),
            (lambda d: d["devices"][0]["script"].append({"kind": "keystroke", "symbol": "b"}),
             "at"),
            (lambda d: d["schedule"].append({"op": "plug", "device": "ghost"}), "ghost"),
            (lambda d: d["schedule"].append({"op": "rewind"}), "rewind"),
            (lambda d: d["expect"].update(colour="red"), "colour"),
            (lambda d: d.update(seed="abc"), "seed"),
        ],
    )
    def test_diagnostics_name_the_offending_field(self, mutate, fragment):
        doc = minimal_doc()
        mutate(doc)
        with pytest.raises(ScenarioInvalid) as exc_info:
            load_scenario(doc)
        assert fragment in str(exc_info.value)

    def test_script_class_mismatch_detected_at_load(self):
        doc = minimal_doc()
        doc["devices"][0]["script"].append(
            {"kind": "file_access", "path": "F:\\x", "access": "read", "at": 2}
        )
        with pytest.raises(ScenarioInvalid):
            load_scenario(doc)

    def test_malformed_descriptor_detected_at_load(self):
        doc = minimal_doc()
        doc["devices"][0]["descriptor"]["serial_number"] = ""
        with pytest.raises(ScenarioInvalid):
            load_scenario(doc)

    def test_duplicate_labels_rejected(self):
        doc = minimal_doc()
        doc["devices"].append(copy.deepcopy(doc["devices"][0]))
        with pytest.raises(ScenarioInvalid):
            load_scenario(doc)


class TestShippedScenarios:
    def test_four_attack_experiments_are_shipped(self):
        names = {p.stem for p in ALL_FILES}
        assert {
            "rubber_ducky",
            "captcha_success",
            "hermes_exfiltration",
            "dns_spoof",
            "allowlist_control",
        } <= names

    @pytest.mark.parametrize("path", ALL_FILES, ids=lambda p: p.stem)
    def test_every_shipped_scenario_passes(self, path):
        report = run_scenario(path)
        assert report.passed, report.render()

    @pytest.mark.parametrize("path", ALL_FILES, ids=lambda p: p.stem)
    def test_reports_are_deterministic(self, path):
        first = json.dumps(run_scenario(path).to_json(), sort_keys=True)
        second = json.dumps(run_scenario(path).to_json(), sort_keys=True)
        assert first == second

    def test_seed_override_changes_the_challenge_outcome(self):
        # the scripted symbols answer the seed-42 challenge; any other seed
        # turns the same keystrokes into a failed challenge
        path = SCENARIOS / "captcha_success.json"
        assert run_scenario(path).passed
        report = run_scenario(path, seed=43)
        assert report.summary["gate_final"] == "locked_out"

    def test_report_render_mentions_every_check(self):
        report = run_scenario(SCENARIOS / "rubber_ducky.json")
        text = report.render()
        for check in report.checks:
            assert check.name in text


class TestServerEnabledScenario:
    def test_deferred_decision_expires_to_block_through_the_full_stack(self):
        """With the in-process server enabled and no operator around, a
        deferred device falls to Block on decision expiry (fail closed)."""
        doc = minimal_doc()
        doc["name"] = "defer-expiry"
        doc["devices"][0]["decision"] = "defer"
        doc["server"] = {"enabled": True, "decision_timeout": 0}
        doc["schedule"] = [
            {"op": "plug", "device": "kb"},
            {"op": "step", "until": 12},  # two heartbeat intervals
        ]
        doc["expect"] = {
            "device_decisions": {"kb": "blocked"},
            "alarm_counts": {"Usage": 1},
            "delivered_keystrokes": 0,
        }
        report = run_scenario(doc)
        assert report.passed, report.render()

    def test_deferred_device_stays_pending_without_a_server(self):
        doc = minimal_doc()
        doc["name"] = "defer-offline"
        doc["devices"][0]["decision"] = "defer"
        doc["schedule"] = [{"op": "plug", "device": "kb"}, {"op": "step", "until": 12}]
        doc["expect"] = {
            "device_decisions": {"kb": "pending_user_decision"},
            "suppressed_events": 1,
            "delivered_keystrokes": 0,
        }
        report = run_scenario(doc)
        assert report.passed, report.render()
