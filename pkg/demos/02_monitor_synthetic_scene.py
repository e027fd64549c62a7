"""
Monitoring a synthetic scene: from walking agents to persisted alerts
=====================================================================

No real camera required.  We script two people on a virtual floor, render
them into detection records through a synthetic overhead camera, and run
the full monitor: distance measurement, violation debouncing, and the
on-disk event store an analyst would query later.
"""

import tempfile
from pathlib import Path

from safewatch.alerting import DebounceConfig, EventStore
from safewatch.geometry import WorldPoint
from safewatch.pipeline import (
    StreamConfig,
    SyntheticAgent,
    overhead_calibration,
    run_monitor,
    synth_scene,
)

# A synthetic camera looking down a 800x600 cm floor.  The calibration it
# returns is a perfectly ordinary Calibration — the rest of the system
# cannot tell it from a surveyed one.
cal = overhead_calibration("demo-cam")

# Two agents: one stands still, the other walks over, lingers well inside
# the 200 cm threshold for a few seconds, then leaves.  Waypoints are
# (position, timestamp-ms); the scene interpolates between them.
agents = [
    SyntheticAgent(1, ((WorldPoint(300.0, 300.0), 0),)),
    SyntheticAgent(
        2,
        (
            (WorldPoint(700.0, 300.0), 0),
            (WorldPoint(480.0, 300.0), 3000),   # closes in: feet gap ~130 cm
            (WorldPoint(480.0, 300.0), 9000),   # ...and stays there
            (WorldPoint(700.0, 300.0), 12000),  # walks away again
        ),
    ),
]
records = synth_scene(agents, cal, fps=5, duration_s=12.0)
print(f"rendered {len(records)} detection records")

# Debounce: a violation must persist 3 s before it alerts, short dropouts
# are tolerated, and an episode never alerts twice within the cooldown.
debounce = DebounceConfig(min_duration_ms=3000, max_gap_frames=2, cooldown_ms=30000)

with tempfile.TemporaryDirectory() as tmp:
    store = EventStore(Path(tmp) / "events")
    summary = run_monitor(
        [StreamConfig("demo-cam", records, cal, debounce=debounce)],
        mode="sync",
        store=store,
    )

    # Alerts fire as soon as an episode has persisted long enough — the
    # episode is usually still running, so the alert carries its start and
    # the closest approach so far.
    for alert in summary.alerts:
        print(
            f"alert {alert.id}: tracks {alert.subject['track_a']}/{alert.subject['track_b']}"
            f" too close since t={alert.started_ts_ms} ms,"
            f" closest approach {alert.min_distance_cm:.1f} cm"
        )
    for episode in summary.episodes:
        held = episode.last_active_ts_ms - episode.started_ts_ms
        print(
            f"episode {episode.track_a}/{episode.track_b}: {episode.frames} frames,"
            f" held {held} ms, alerted={episode.alerted}"
        )

    # The store is what survives the process.  Reopen it cold, as the
    # query CLI or the HTTP API would, and everything is still there.
    reopened = EventStore(Path(tmp) / "events")
    print(f"store holds {len(reopened)} alert(s) and {len(reopened.episodes)} episode record(s)")
    for started, count in reopened.trend("hour"):
        print(f"hour bucket starting {started} ms: {count} alert(s)")
