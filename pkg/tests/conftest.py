from __future__ import annotations

from pathlib import Path

import pytest

from fsk_bitenergy.core.config import AppConfig, ExecutionConfig
from fsk_bitenergy.numerics.channel import ChannelModel


@pytest.fixture
def app_config(tmp_path: Path) -> AppConfig:
    return AppConfig(
        workspace_dir=tmp_path / "workspace",
        execution=ExecutionConfig(workers=2),
    )


@pytest.fixture
def awgn() -> ChannelModel:
    return ChannelModel.awgn()


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    # keeps config.yaml lookups and runtime logs inside the test directory
    monkeypatch.chdir(tmp_path)
