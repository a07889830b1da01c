"""Shared pytest wiring: per-criterion PASS/FAIL lines for the acceptance suite."""
from collections import OrderedDict

_LABEL_OF = {}            # nodeid -> criterion label
_ORDER = OrderedDict()    # first-seen label order


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(label): names the acceptance criterion a test verifies")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            label = marker.args[0]
            _LABEL_OF[item.nodeid] = label
            _ORDER.setdefault(label, None)


def pytest_terminal_summary(terminalreporter):
    if not _LABEL_OF:
        return
    outcomes = {}
    for status, reports in terminalreporter.stats.items():
        for report in reports:
            nodeid = getattr(report, "nodeid", None)
            label = _LABEL_OF.get(nodeid)
            if label is None:
                continue
            if getattr(report, "when", "call") != "call" and status != "error":
                if not report.failed:
                    continue
            failed = status in ("failed", "error") or report.failed
            if failed:
                outcomes[label] = "FAIL"
            else:
                outcomes.setdefault(label, "PASS")
    terminalreporter.write_sep("-", "acceptance criteria")
    for label in _ORDER:
        terminalreporter.write_line(
            f"ACCEPTANCE {label}: {outcomes.get(label, 'FAIL')}")
