import shutil

import pytest

from facetsim.demos import demo_workspace


@pytest.fixture
def demo_ws(tmp_path):
    """Writable copy of the bundled demo workspace."""
    target = tmp_path / "workspace"
    shutil.copytree(demo_workspace(), target)
    return target
