"""Bundled demo workspace: document procurement, job market, insurance
subsidy, and a needs-based lockdown model."""

from importlib import resources
from pathlib import Path


def demo_workspace() -> Path:
    """Filesystem path of the read-only bundled workspace.

    Copy it somewhere writable before running (archives are written under
    ``<workspace>/runs`` by default)::

        import shutil
        shutil.copytree(demo_workspace(), "my-workspace")
    """
    return Path(resources.files(__package__) / "workspace")
