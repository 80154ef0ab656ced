"""Synthetic scenario builders shared across the test suite.

Twin devices share an IE template but sweep channels in contrasting
orders, so the coarse stage cannot tell them apart while the pattern
stage can. Templates are spaced so their byte sums stay well separated
after min-max scaling (adjacent gap ~1/6 per dimension).
"""

from probederand.synth import DeviceProfile, IeTemplate, Scenario

# (pattern A, pattern B) per twin pair; every channel is on a default
# sniffer, so nothing but jitter is lost at capture time.
TWIN_PATTERNS = [
    ((1, 1, 6, 6, 11, 11), (11, 11, 6, 6, 1, 1)),
    ((1, 6, 11), (11, 6, 1)),
    ((1, 1, 1, 1, 6, 11), (11, 11, 11, 11, 6, 1)),
    ((1, 11, 1, 11, 1, 11), (11, 1, 11, 1, 11, 1)),
    ((6, 1, 1, 1, 1), (6, 11, 11, 11, 11)),
    ((1, 1, 11, 11), (11, 11, 1, 1)),
    ((6, 6, 1, 1, 1, 1, 6, 6), (6, 6, 11, 11, 11, 11, 6, 6)),
]


def pair_template(i: int) -> IeTemplate:
    return IeTemplate(
        ht=bytes([10 * (i + 1), i]),
        extended=bytes([5 * (i + 1)]),
        vendor=(bytes([3 * (i + 1), 1]),),
    )


def unique_template(i: int) -> IeTemplate:
    return IeTemplate(
        ht=bytes([90 + 10 * i, 7]),
        extended=bytes([80 + 4 * i]),
        vendor=(bytes([60 + 2 * i, 2]),),
    )


def twin_profiles(n_pairs: int = 7, jitter: float = 0.05) -> list[DeviceProfile]:
    profiles = []
    for i in range(n_pairs):
        pattern_a, pattern_b = TWIN_PATTERNS[i]
        template = pair_template(i)
        for tag, pattern in (("a", pattern_a), ("b", pattern_b)):
            profiles.append(
                DeviceProfile(
                    device_id=f"pair{i}-{tag}",
                    ie_template=template,
                    pnl_pattern=pattern,
                    burst_length=len(pattern),
                    inter_burst_interval=(6.0, 10.0),
                    channel_jitter=jitter,
                )
            )
    return profiles


def twin_scenario(seed: int, duration: float = 320.0, jitter: float = 0.05) -> Scenario:
    """Seven twin pairs; every device emits at least 32 bursts."""
    return Scenario(
        profiles=tuple(twin_profiles(jitter=jitter)),
        duration=duration,
        seed=seed,
    )


def mixed_scenario(seed: int, duration: float = 320.0) -> Scenario:
    """Three twin pairs plus six heterogeneous devices, jitter-free.

    Two of the unique devices keep a fixed global MAC to exercise the
    burst-gap split for non-randomizing hardware.
    """
    profiles = twin_profiles(n_pairs=3, jitter=0.0)
    unique_patterns = [
        (1, 6, 11, 6),
        (6, 6, 11, 1),
        (11, 1, 6),
        (1, 1, 6, 11, 11),
        (6, 11, 6, 1),
        (11, 11, 6, 6, 1),
    ]
    for i, pattern in enumerate(unique_patterns):
        profiles.append(
            DeviceProfile(
                device_id=f"solo{i}",
                ie_template=unique_template(i),
                pnl_pattern=pattern,
                burst_length=len(pattern),
                inter_burst_interval=(6.0, 10.0),
                randomize_mac=i >= 4,
                channel_jitter=0.0,
            )
        )
    return Scenario(profiles=tuple(profiles), duration=duration, seed=seed)


def hetero_scenario(seed: int, n_devices: int = 8, duration: float = 320.0) -> Scenario:
    """Fully heterogeneous devices with well-separated IE templates."""
    profiles = []
    base_patterns = [
        (1, 6, 11),
        (11, 6, 1),
        (1, 1, 6, 11),
        (6, 6, 1, 11),
        (11, 11, 6, 1),
        (1, 11, 6, 6),
        (6, 1, 11, 11),
        (11, 1, 1, 6),
    ]
    for i in range(n_devices):
        profiles.append(
            DeviceProfile(
                device_id=f"uniq{i}",
                ie_template=unique_template(i),
                pnl_pattern=base_patterns[i % len(base_patterns)],
                burst_length=len(base_patterns[i % len(base_patterns)]),
                inter_burst_interval=(6.0, 10.0),
                channel_jitter=0.0,
            )
        )
    return Scenario(profiles=tuple(profiles), duration=duration, seed=seed)
