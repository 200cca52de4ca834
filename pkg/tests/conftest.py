import os
from pathlib import Path

import pytest

from slungload import campaign


@pytest.fixture(scope="session")
def campaign_dir(tmp_path_factory):
    """Full campaign artifacts for the system-level acceptance checks.

    Set SLUNGLOAD_CAMPAIGN_DIR to a directory produced by
    `slungload campaign --out <dir>` to reuse existing artifacts; otherwise
    the full matrix is executed here (several minutes).
    """
    env = os.environ.get("SLUNGLOAD_CAMPAIGN_DIR")
    if env and (Path(env) / "summary.json").exists():
        return Path(env)
    out = tmp_path_factory.mktemp("campaign")
    campaign.run_campaign(out, progress=False)
    return out


@pytest.fixture(scope="session")
def campaign_summary(campaign_dir):
    import json
    return json.loads((campaign_dir / "summary.json").read_text())


@pytest.fixture(scope="session")
def campaign_metrics(campaign_dir):
    """tag -> metrics dict for every stored run."""
    import json
    out = {}
    for mp in sorted(campaign_dir.glob("*/metrics.json")):
        out[mp.parent.name] = json.loads(mp.read_text())
    return out
