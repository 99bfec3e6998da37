"""Packaged example manifests: the smart lamp and its study-rig variant."""

from importlib import resources

from ..manifest import Manifest, parse_manifest


def _read(name: str) -> str:
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8")


def lamp_manifest_text() -> str:
    return _read("lamp.yaml")


def lamp_study_manifest_text() -> str:
    return _read("lamp_study.yaml")


def lamp_manifest() -> Manifest:
    """The two-intent, one-event smart lamp."""
    return parse_manifest(lamp_manifest_text())


def lamp_study_manifest() -> Manifest:
    """The lamp plus set_label (pattern/max_length) and admin-only reboot."""
    return parse_manifest(lamp_study_manifest_text())
