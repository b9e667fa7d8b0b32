import pytest

from conftest import HOME

from hchain.crypto import RandomSource
from hchain.payload import GeoCoordinate
from hchain.simnet import (
    AdversaryKind,
    AdversaryPolicy,
    Channel,
    ConfigError,
    PatientSpec,
    ScenarioSpec,
    offset_coordinate,
    run_scenario,
)
from hchain.verification_node import haversine_distance


def hamming(a: bytes, b: bytes) -> int:
    assert len(a) == len(b)
    return sum(x != y for x, y in zip(a, b))


class TestChannel:
    def test_clean_channel_exact_once_in_order(self):
        channel = Channel("c")
        messages = [f"m{i}".encode() for i in range(100)]
        for m in messages:
            channel.send(m)
        assert channel.drain() == messages
        assert channel.delivered == 100
        assert channel.counters()["tampered"] == 0

    def test_tamper_flips_exactly_one_byte(self):
        policy = AdversaryPolicy(kind=AdversaryKind.TAMPER_RANDOM_BYTE, probability=1.0, seed=3)
        channel = Channel("c", policy)
        rng = RandomSource(17)
        for _ in range(100):
            message = rng.bytes(64)
            channel.send(message)
            delivered = channel.drain()
            assert len(delivered) == 1
            assert hamming(message, delivered[0]) == 1
        assert channel.tampered == 100

    def test_replay_duplicates_previous(self):
        policy = AdversaryPolicy(kind=AdversaryKind.REPLAY_PREVIOUS, probability=1.0, seed=3)
        channel = Channel("c", policy)
        channel.send(b"m1")
        channel.send(b"m2")
        delivered = channel.drain()
        assert len(delivered) >= 3
        assert delivered[0] == b"m1"
        assert delivered[1] == b"m2"
        assert b"m1" in delivered[2:]
        assert channel.replayed == 1

    def test_probability_zero_is_passthrough(self):
        policy = AdversaryPolicy(kind=AdversaryKind.TAMPER_RANDOM_BYTE, probability=0.0, seed=3)
        channel = Channel("c", policy)
        channel.send(b"hello")
        assert channel.drain() == [b"hello"]
        assert channel.tampered == 0

    def test_equal_seeds_equal_action_sequence(self):
        rng = RandomSource(4)
        messages = [rng.bytes(32) for _ in range(50)]
        outputs = []
        for _ in range(2):
            policy = AdversaryPolicy(
                kind=AdversaryKind.TAMPER_RANDOM_BYTE, probability=0.5, seed=77
            )
            channel = Channel("c", policy)
            for m in messages:
                channel.send(m)
            outputs.append(channel.drain())
        assert outputs[0] == outputs[1]

    def test_forge_requires_forger(self):
        policy = AdversaryPolicy(kind=AdversaryKind.INJECT_FORGED, probability=1.0, seed=1)
        with pytest.raises(ConfigError):
            Channel("c", policy, forge=None)

    def test_bad_probability_rejected(self):
        with pytest.raises(ConfigError):
            AdversaryPolicy(probability=1.5)

    def test_bad_channel_rejected(self):
        with pytest.raises(ConfigError):
            AdversaryPolicy(channel="nowhere")


class TestOffsetCoordinate:
    def test_offset_distance_matches(self):
        for meters in (1.0, 50.0, 100.0, 5000.0):
            moved = offset_coordinate(HOME, meters)
            assert haversine_distance(HOME, moved) == pytest.approx(meters, rel=1e-6)


class TestScenarios:
    def test_clean_scenario_arithmetic(self, tmp_path):
        # 20 readings, batch 5 -> 4 ledger entries
        result = run_scenario(ScenarioSpec(seed=42), data_dir=tmp_path)
        report = result.report
        assert report["readings_ingested"] == 20
        assert report["gpds_emitted"] == 4
        assert report["ledger_entries"] == 4
        assert report["hcp_edge"]["discarded"] == 0
        assert report["vn"]["accepted"] == 4

    def test_tamper_all_rejected_at_integrity_stage(self):
        spec = ScenarioSpec(
            seed=42,
            adversary=AdversaryPolicy(
                kind=AdversaryKind.TAMPER_RANDOM_BYTE, probability=1.0, seed=9
            ),
        )
        report = run_scenario(spec).report
        assert report["ledger_entries"] == 0
        assert report["hcp_edge"]["forwarded"] == 0
        assert report["hcp_edge"]["discarded"] == report["channels"]["ped_to_hcpe"]["tampered"] == 4

    def test_reroute_rejected_at_location_stage(self):
        spec = ScenarioSpec(
            seed=42,
            patients=[
                PatientSpec(identity="patient-001", home=HOME, location_offset_m=5000.0)
            ],
            adversary=AdversaryPolicy(kind=AdversaryKind.REROUTE_WRONG_LOCATION),
        )
        report = run_scenario(spec).report
        assert report["ledger_entries"] == 0
        assert report["vn"]["rejected"]["loc"] == 4
        assert report["vn"]["rejected"]["sig"] == 0

    def test_forged_rejected_at_signature_stage(self):
        spec = ScenarioSpec(
            seed=42,
            adversary=AdversaryPolicy(
                kind=AdversaryKind.INJECT_FORGED,
                probability=1.0,
                seed=9,
                channel="hcpe_to_vn",
            ),
        )
        report = run_scenario(spec).report
        assert report["ledger_entries"] == 0
        assert report["vn"]["rejected"]["sig"] == 4

    def test_replay_rejected_at_replay_stage_originals_stored(self):
        spec = ScenarioSpec(
            seed=42,
            adversary=AdversaryPolicy(
                kind=AdversaryKind.REPLAY_PREVIOUS, probability=1.0, seed=9
            ),
        )
        report = run_scenario(spec).report
        assert report["ledger_entries"] == 4
        assert report["vn"]["rejected"]["replay"] == 3  # no previous for the first

    def test_unregistered_identity_rejected_at_identity_stage(self):
        spec = ScenarioSpec(
            seed=42,
            patients=[
                PatientSpec(identity="patient-001", home=HOME, register_in_directory=False)
            ],
        )
        report = run_scenario(spec).report
        assert report["ledger_entries"] == 0
        assert report["vn"]["rejected"]["id"] == 4

    def test_partial_probability_tamper_mixed_traffic(self):
        # p=0.5: untouched groups land, tampered ones are discarded, and the
        # counters stay coherent
        spec = ScenarioSpec(
            seed=42,
            batch_size=1,
            readings_per_patient=200,
            adversary=AdversaryPolicy(
                kind=AdversaryKind.TAMPER_RANDOM_BYTE, probability=0.5, seed=99
            ),
        )
        report = run_scenario(spec).report
        tampered = report["channels"]["ped_to_hcpe"]["tampered"]
        assert 0 < tampered < 200
        assert report["hcp_edge"]["discarded"] == tampered
        assert report["hcp_edge"]["forwarded"] == 200 - tampered
        assert report["ledger_entries"] == 200 - tampered
        assert report["vn"]["accepted"] == 200 - tampered

    def test_determinism_byte_identical_artifacts(self, tmp_path):
        spec_wire = ScenarioSpec(seed=42).to_wire()
        a = run_scenario(ScenarioSpec.from_wire(spec_wire), data_dir=tmp_path / "a")
        b = run_scenario(ScenarioSpec.from_wire(spec_wire), data_dir=tmp_path / "b")
        assert a.report_bytes() == b.report_bytes()
        assert (tmp_path / "a/chain.jsonl").read_bytes() == (tmp_path / "b/chain.jsonl").read_bytes()
        assert (tmp_path / "a/directory.store").read_bytes() == (tmp_path / "b/directory.store").read_bytes()

    def test_different_seed_changes_chain(self, tmp_path):
        run_scenario(ScenarioSpec(seed=1), data_dir=tmp_path / "a")
        run_scenario(ScenarioSpec(seed=2), data_dir=tmp_path / "b")
        assert (tmp_path / "a/chain.jsonl").read_bytes() != (tmp_path / "b/chain.jsonl").read_bytes()

    def test_multi_patient_multiplexing(self):
        spec = ScenarioSpec(
            seed=42,
            readings_per_patient=10,
            batch_size=5,
            patients=[
                PatientSpec(identity="patient-001", home=HOME),
                PatientSpec(identity="patient-002", home=GeoCoordinate(40.4406, -79.9959)),
            ],
        )
        result = run_scenario(spec)
        assert result.report["ledger_entries"] == 4  # 2 per patient
        assert len(result.chain.state.patients) == 2

    def test_spec_wire_roundtrip(self):
        spec = ScenarioSpec(
            seed=7,
            batch_size=2,
            readings_per_patient=6,
            adversary=AdversaryPolicy(
                kind=AdversaryKind.REPLAY_PREVIOUS, probability=0.5, seed=3
            ),
        )
        again = ScenarioSpec.from_wire(spec.to_wire())
        assert again.to_wire() == spec.to_wire()

    def test_spec_file_loading(self, tmp_path):
        import json

        from hchain.simnet import load_scenario_spec

        spec = ScenarioSpec(seed=5, batch_size=2, readings_per_patient=4)
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(spec.to_wire()))
        loaded = load_scenario_spec(path)
        assert loaded.to_wire() == spec.to_wire()
        report = run_scenario(loaded).report
        assert report["ledger_entries"] == 2

        path.write_text("{broken")
        with pytest.raises(ConfigError):
            load_scenario_spec(path)

    def test_bad_spec_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioSpec(batch_size=0)
        with pytest.raises(ConfigError):
            ScenarioSpec(home_radius_m=0)
        with pytest.raises(ConfigError):
            ScenarioSpec.from_wire({"adversary": {"kind": "meteor_strike"}})

    def test_stored_readings_decrypt_to_ingested_plaintexts(self, tmp_path):
        from hchain.crypto import symmetric_decrypt
        from hchain.payload import PhysiologicalReading, parse_wire_json

        result = run_scenario(ScenarioSpec(seed=42), data_dir=tmp_path)
        patient = result.patients[0]
        record = result.directory.lookup(patient.device.identity_token)
        key = result.directory.fetch_patient_key(record)
        decrypted = []
        for entry in result.chain.state.patients[patient.ledger_patient_id]:
            for er in entry.signed_gpd.gpd.readings:
                raw = symmetric_decrypt(key, er.ciphertext)
                decrypted.append(PhysiologicalReading.from_wire(parse_wire_json(raw)))
        assert decrypted == patient.plaintext_readings
