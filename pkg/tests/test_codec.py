import base64
import random
import string

import pytest
from hypothesis import given, settings, strategies as st

from graffiti import codec
from graffiti.codec import (
    ReplicaKey,
    decode_payload,
    encode_payload,
    extract_payload,
    generate_key,
    recover,
    wrap_page,
)
from graffiti.errors import (
    Base64FormatError,
    ChecksumMismatchError,
    DecryptionError,
    EmptyInputError,
    MarkerNotFoundError,
    PayloadError,
    TruncatedPayloadError,
)
from graffiti.fileset import digest

B64 = string.ascii_letters + string.digits + "+/"


def pipeline_length_oracle(n: int) -> int:
    # Pad by hand (1..8 bytes, 24-byte floor), then let base64 report its size.
    pad = 8 - n % 8
    return len(base64.b64encode(bytes(max(24, n + pad))))


def test_generate_key_distinct_and_formatted():
    rng = random.Random(99)
    keys = {generate_key(rng).hex() for _ in range(10_000)}
    assert len(keys) == 10_000
    assert all(len(k) == 32 and k == k.lower() and all(c in "0123456789abcdef" for c in k) for k in list(keys)[:50])
    assert generate_key() != generate_key()


def test_generate_key_seeded_reproducible():
    assert generate_key(random.Random(0)) == generate_key(random.Random(0))
    k = generate_key(random.Random(0))
    assert ReplicaKey.from_hex(k.hex()) == k
    with pytest.raises(ValueError):
        ReplicaKey(b"short")


def test_full_subpiece_encoded_length():
    expected = pipeline_length_oracle(65_536)
    assert expected == 87_392
    payload = encode_payload(random.Random(3).randbytes(65_536), generate_key(random.Random(1)))
    assert len(payload.text) == expected == codec.encoded_length(65_536)


@pytest.mark.parametrize("n", [1, 7, 8, 9, 23, 24, 1000, 65_535, 65_536])
def test_encoded_length_matches_oracle(n):
    key = generate_key(random.Random(n))
    assert len(encode_payload(bytes(n), key).text) == pipeline_length_oracle(n) == codec.encoded_length(n)


def test_payload_invariants():
    p = encode_payload(b"x", generate_key(random.Random(5)))
    assert len(p.text) >= 32
    assert p.text.startswith(p.start_marker) and p.text.endswith(p.end_marker)
    assert len(p.start_marker) == len(p.end_marker) == 16
    base64.b64decode(p.text, validate=True)
    assert p.plaintext_checksum == digest(b"x")


def test_empty_and_oversize_rejected():
    key = generate_key(random.Random(1))
    with pytest.raises(EmptyInputError):
        encode_payload(b"", key)
    with pytest.raises(ValueError):
        encode_payload(bytes(65_537), key)


def test_distinct_keys_give_distinct_markers():
    data = random.Random(8).randbytes(4096)
    rng = random.Random(8)
    a = encode_payload(data, generate_key(rng))
    b = encode_payload(data, generate_key(rng))
    assert a.text != b.text
    for m in (a.start_marker, a.end_marker):
        assert m not in b.text
    for m in (b.start_marker, b.end_marker):
        assert m not in a.text


def test_encoding_is_deterministic():
    key = generate_key(random.Random(2))
    assert encode_payload(b"abc" * 99, key) == encode_payload(b"abc" * 99, key)


def test_decode_roundtrip_and_wrong_key():
    rng = random.Random(4)
    data = rng.randbytes(5000)
    key = generate_key(rng)
    p = encode_payload(data, key)
    assert decode_payload(p.text, key, digest(data)) == data
    with pytest.raises((ChecksumMismatchError, DecryptionError)):
        decode_payload(p.text, generate_key(rng), digest(data))


def test_decode_error_classes_are_distinct():
    key = generate_key(random.Random(6))
    p = encode_payload(b"hello world", key)
    with pytest.raises(Base64FormatError):
        decode_payload(p.text[:-1] + "!", key, p.plaintext_checksum)
    with pytest.raises(DecryptionError):
        decode_payload(base64.b64encode(b"12345").decode(), key, p.plaintext_checksum)
    with pytest.raises(ChecksumMismatchError):
        decode_payload(p.text, key, digest(b"other"))


def test_wrap_layout_is_bit_exact():
    p = encode_payload(b"data", generate_key(random.Random(7)))
    page = wrap_page(p, "Explanation.", "http://example.invalid/track/1")
    assert page == f"Explanation.\n\nhttp://example.invalid/track/1\n\n{p.text}\n"
    assert page.count(p.text) == 1
    assert wrap_page(p, "N") == f"N\n\n{p.text}\n"
    with pytest.raises(ValueError):
        wrap_page(p, "")


def test_extract_from_boilerplate():
    p = encode_payload(random.Random(1).randbytes(700), generate_key(random.Random(1)))
    page = "<html><body><p>Main Page</p>" + wrap_page(p, "notice", "http://x") + "<div>footer</div></body></html>"
    assert extract_payload(page, p.start_marker, p.end_marker) == [p.text]


def test_extract_errors():
    p = encode_payload(b"q" * 300, generate_key(random.Random(2)))
    with pytest.raises(MarkerNotFoundError):
        extract_payload("nothing here", p.start_marker, p.end_marker)
    with pytest.raises(TruncatedPayloadError):
        extract_payload(p.text[:-20], p.start_marker, p.end_marker)
    with pytest.raises(ValueError):
        extract_payload(p.text, "short", p.end_marker)


def test_extract_returns_every_candidate():
    p = encode_payload(b"z" * 100, generate_key(random.Random(3)))
    decoy = p.start_marker + "AAAA" + p.end_marker
    page = decoy + "\n" + p.text
    cands = extract_payload(page, p.start_marker, p.end_marker)
    assert cands[0] == decoy and p.text in cands
    key = generate_key(random.Random(3))
    assert recover(page, key, p.plaintext_checksum, p.start_marker, p.end_marker) == b"z" * 100


def test_notices_with_base64_characters_do_not_confuse_extraction():
    rng = random.Random(11)
    for _ in range(1000):
        key = generate_key(rng)
        data = rng.randbytes(rng.randint(1, 256))
        p = encode_payload(data, key)
        notice = "".join(rng.choice(B64 + " \n") for _ in range(rng.randint(1, 400)))
        page = wrap_page(p, notice, "")
        assert extract_payload(page, p.start_marker, p.end_marker) == [p.text]


def test_middle_deletions_never_yield_wrong_bytes():
    rng = random.Random(12)
    for _ in range(300):
        key = generate_key(rng)
        data = rng.randbytes(rng.randint(1, 3000))
        p = encode_payload(data, key)
        i = rng.randrange(1, len(p.text) - 1)
        j = rng.randrange(i, len(p.text))
        page = wrap_page(p, "note") .replace(p.text, p.text[:i] + p.text[j:])
        try:
            out = recover(page, key, digest(data), p.start_marker, p.end_marker)
        except PayloadError:
            continue
        assert out == data


def test_exhaustive_single_char_mutation_short_payload():
    key = generate_key(random.Random(13))
    data = random.Random(13).randbytes(64)
    p = encode_payload(data, key)
    wrong = 0
    for i, orig in enumerate(p.text):
        for c in B64 + "=":
            if c == orig:
                continue
            try:
                out = decode_payload(p.text[:i] + c + p.text[i + 1:], key, p.plaintext_checksum)
            except PayloadError:
                continue
            wrong += out != data
    assert wrong == 0


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=1, max_size=4096), st.integers(0, 2**63))
def test_roundtrip_property(data, seed):
    key = generate_key(random.Random(seed))
    page = wrap_page(encode_payload(data, key), "notice text", "http://t/x")
    p = encode_payload(data, key)
    assert recover(page, key, digest(data), p.start_marker, p.end_marker) == data
