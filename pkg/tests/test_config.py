"""INI config loading, canonical rendering, and manifest identity."""

import json
import subprocess

import pytest

from reserve_rl.config import (
    FLOOR_FORMS,
    build_manifest,
    config_fingerprint,
    config_to_ini,
    default_config,
    git_blob_sha1,
    load_config,
    to_env_config,
    to_ppo_config,
    to_schedule,
    write_manifest,
)
from reserve_rl.errors import ConfigError, IoFailure
from reserve_rl.regimes import FixedShock, Stochastic


def write_ini(tmp_path, body):
    path = tmp_path / "run.ini"
    path.write_text(body)
    return str(path)


def test_defaults_round_trip(tmp_path):
    cfg = default_config()
    path = write_ini(tmp_path, config_to_ini(cfg))
    assert load_config(path) == cfg
    assert load_config(None) == cfg


def test_fingerprint_tracks_content(tmp_path):
    cfg = default_config()
    assert config_fingerprint(cfg) == config_fingerprint(default_config())
    other = load_config(write_ini(tmp_path, "[run]\nseed = 99\n"))
    assert config_fingerprint(other) != config_fingerprint(cfg)
    assert len(config_fingerprint(cfg)) == 64  # sha256 hex


def test_alpha_special_values(tmp_path):
    cfg = load_config(write_ini(tmp_path, "[env]\nalpha = adaptive\n"))
    assert cfg.env.alpha is None
    cfg = load_config(write_ini(tmp_path, "[env]\nalpha = 0.93\n"))
    assert cfg.env.alpha == 0.93
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[env]\nalpha = 1.5\n"))
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[env]\nalpha = 0\n"))


def test_horizon_special_values(tmp_path):
    assert load_config(write_ini(tmp_path, "[env]\nhorizon = auto\n")).env.horizon is None
    assert load_config(write_ini(tmp_path, "[env]\nhorizon =\n")).env.horizon is None
    assert load_config(write_ini(tmp_path, "[env]\nhorizon = 12\n")).env.horizon == 12


def test_elr_and_floor_special_values(tmp_path):
    assert load_config(write_ini(tmp_path, "[baselines]\nelr = pooled\n")).baselines.elr is None
    assert load_config(write_ini(tmp_path, "[baselines]\nelr = 0.85\n")).baselines.elr == 0.85
    assert load_config(write_ini(tmp_path, "[env]\nfloor = strict\n")).env.floor == "strict"
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[env]\nfloor = bogus\n"))


def test_bool_and_tuple_parsing(tmp_path):
    cfg = load_config(
        write_ini(tmp_path, "[ppo]\nreward_norm = no\n[regimes]\nlevels = 0, 2\n")
    )
    assert cfg.ppo.reward_norm is False
    assert cfg.regimes.levels == (0, 2)
    cfg = load_config(write_ini(tmp_path, "[eval]\nshocks = 0.5,1.25\n"))
    assert cfg.eval.shocks == (0.5, 1.25)
    assert load_config(write_ini(tmp_path, "[run]\nseeds =\n")).run.seeds == ()
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[ppo]\nreward_norm = maybe\n"))


def test_unknown_section_and_key_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[nonsense]\nx = 1\n"))
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "[env]\nnot_a_knob = 1\n"))


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.ini"))
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, "key_without_section = 1\n"))


def test_to_env_config_defaults_and_overrides():
    cfg = load_config(None)
    env_cfg = to_env_config(cfg)
    assert (env_cfg.floor_base, env_cfg.floor_slope) == FLOOR_FORMS["default"]
    assert env_cfg.alpha_override is None
    assert env_cfg.shock_mode == Stochastic(0)
    assert env_cfg.horizon is None

    overridden = to_env_config(
        cfg,
        shock_mode=FixedShock(1.5),
        alpha=0.99,
        floor=FLOOR_FORMS["strict"],
        horizon=7,
    )
    assert overridden.shock_mode == FixedShock(1.5)
    assert overridden.alpha_override == 0.99
    assert (overridden.floor_base, overridden.floor_slope) == (0.5, 0.3)
    assert overridden.horizon == 7


def test_to_env_config_alpha_none_is_an_override(tmp_path):
    """Passing alpha=None explicitly must win over a pinned config value."""
    cfg = load_config(write_ini(tmp_path, "[env]\nalpha = 0.93\n"))
    assert to_env_config(cfg).alpha_override == 0.93
    assert to_env_config(cfg, alpha=None).alpha_override is None


def test_to_ppo_config_mapping(tmp_path):
    cfg = load_config(
        write_ini(
            tmp_path,
            "[ppo]\nepochs = 4\nhidden = 16,16\n[run]\nseeds = 7,8\n",
        )
    )
    ppo = to_ppo_config(cfg)
    assert ppo.epochs_per_update == 4
    assert ppo.hidden_sizes == (16, 16)
    assert ppo.seeds == (7, 8)
    assert ppo.learning_rate == cfg.ppo.learning_rate


def test_to_schedule(tmp_path):
    cfg = load_config(
        write_ini(tmp_path, "[regimes]\nlevels = 0,1\nepisodes_per_level = 5\nramp_episodes = 2\n")
    )
    sched = to_schedule(cfg)
    assert sched.levels == (0, 1)
    assert sched.episodes_per_level == 5
    assert sched.ramp_episodes == 2
    assert to_schedule(cfg, levels=[3]).levels == (3,)


def test_git_blob_sha1_matches_git(tmp_path):
    path = tmp_path / "blob.txt"
    path.write_bytes(b"some file contents\n")
    expected = subprocess.run(
        ["git", "hash-object", str(path)],
        capture_output=True, text=True, check=True,
    ).stdout.strip()
    assert git_blob_sha1(str(path)) == expected
    with pytest.raises(IoFailure):
        git_blob_sha1(str(tmp_path / "missing.bin"))


def test_build_and_write_manifest(tmp_path):
    blob = tmp_path / "input.csv"
    blob.write_text("a,b\n1,2\n")
    cfg = default_config()
    manifest = build_manifest(
        "train", cfg, inputs={"triangle": str(blob)}, outputs=["b.json", "a.csv"]
    )
    assert manifest["tool"] == "reserve-rl"
    assert manifest["command"] == "train"
    assert manifest["config_fingerprint"] == config_fingerprint(cfg)
    assert manifest["inputs"] == {"triangle": git_blob_sha1(str(blob))}
    assert manifest["outputs"] == ["a.csv", "b.json"]  # sorted
    assert "created_at" in manifest

    out = tmp_path / "manifest.json"
    write_manifest(str(out), manifest)
    assert json.loads(out.read_text()) == manifest
    with pytest.raises(IoFailure):
        write_manifest(str(tmp_path / "nope" / "m.json"), manifest)
