import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghlgen.btid import (
    BluetoothIdError,
    BluetoothTestCaseId,
    format_bluetooth_id,
    is_bluetooth_id,
    parse_bluetooth_id,
)

# the eight IDs shown as identical truth/generated pairs
PUBLISHED_IDS = [
    "AVRCP/CT/CON/BV-01-C",
    "AVRCP/TG/MPS/BI-01-C",
    "BAP/UCL/DISC/BV-05-C",
    "BAP/USR/DISC/BV-07-C",
    "HFP/HF/ACS/BV-01-C",
    "HFP/AG/ACS/BV-02-C",
    "VDP/SNK/SYN/BV-01-C",
    "VDP/SRC/HC/BV-02-C",
]

part = st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_abc", min_size=1, max_size=6)
valid_ids = st.builds(
    BluetoothTestCaseId,
    spec=part,
    iut_role=part,
    segments=st.lists(part, min_size=1, max_size=5).map(tuple),
    behavior=st.sampled_from(["BV", "BI"]),
    nn=st.integers(0, 99),
    y=st.sampled_from(list("CIOXabz")),
)


def test_parse_fields():
    tcid = parse_bluetooth_id("AVRCP/TG/MPS/BI-01-C")
    assert tcid.spec == "AVRCP"
    assert tcid.iut_role == "TG"
    assert tcid.segments == ("MPS",)
    assert tcid.behavior == "BI"
    assert tcid.nn == 1
    assert tcid.y == "C"
    assert parse_bluetooth_id("HFP/HF/ACS/BV-01-C").behavior == "BV"


@pytest.mark.parametrize("text", PUBLISHED_IDS)
def test_published_ids_round_trip(text):
    assert format_bluetooth_id(parse_bluetooth_id(text)) == text


def test_multi_segment_id():
    tcid = parse_bluetooth_id("BAP/UCL/SCC/CFG/CP/BV-12-C")
    assert tcid.segments == ("SCC", "CFG", "CP")
    assert str(tcid) == "BAP/UCL/SCC/CFG/CP/BV-12-C"


def test_zero_padding():
    tcid = BluetoothTestCaseId("VDP", "SNK", ("SYN",), "BV", 1, "C")
    assert format_bluetooth_id(tcid) == "VDP/SNK/SYN/BV-01-C"
    # normalized input: one-digit nn and surrounding space
    assert format_bluetooth_id(parse_bluetooth_id("  VDP/SNK/SYN/BV-1-C\n")) == "VDP/SNK/SYN/BV-01-C"


@pytest.mark.parametrize(
    "bad",
    [
        "AVRCP/CT/CON",  # no behavior tail
        "AVRCP/BV-01-C",  # too few segments
        "AVRCP/CT/BV-01-C",  # no class segment
        "AVRCP/CT/CON/BX-01-C",  # behavior not BV/BI
        "AVRCP/CT/CON/BV-001-C",
        "AVRCP/CT/CON/BV-01-CC",
        "AVRCP/CT//BV-01-C",
        "A/B/C/D/E/F/G/H/BV-01-C",  # six segments
        "",
    ],
)
def test_rejects_malformed(bad):
    with pytest.raises(BluetoothIdError):
        parse_bluetooth_id(bad)
    assert not is_bluetooth_id(bad)


@settings(max_examples=1000)
@given(valid_ids)
def test_round_trip_random(tcid):
    assert parse_bluetooth_id(format_bluetooth_id(tcid)) == tcid


@settings(max_examples=300)
@given(valid_ids)
def test_format_parse_identity_on_canonical_text(tcid):
    text = format_bluetooth_id(tcid)
    assert format_bluetooth_id(parse_bluetooth_id(text)) == text
