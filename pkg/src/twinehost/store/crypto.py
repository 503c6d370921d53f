"""Key derivation and the two node ciphers."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESCCM, AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

KEY_SIZE = 16
IV_SIZE = 12
TAG_SIZE = 16
ROOT_INFO = b"pfs-root"


class CipherVariant(enum.IntEnum):
    GCM = 0
    CCM = 1


class KeyMode(enum.Enum):
    DERIVED = "derived"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class KeyPolicy:
    mode: KeyMode
    master_secret: bytes | None = None
    explicit_key: bytes | None = None

    def __post_init__(self):
        if self.mode is KeyMode.DERIVED:
            if self.master_secret is None or len(self.master_secret) != 32:
                raise ValueError("derived mode needs a 32-byte master secret")
            if self.explicit_key is not None:
                raise ValueError("derived mode takes no explicit key")
        else:
            if self.explicit_key is None or len(self.explicit_key) != KEY_SIZE:
                raise ValueError("explicit mode needs a 16-byte key")
            if self.master_secret is not None:
                raise ValueError("explicit mode takes no master secret")

    @classmethod
    def derived(cls, master_secret: bytes) -> "KeyPolicy":
        return cls(KeyMode.DERIVED, master_secret=bytes(master_secret))

    @classmethod
    def explicit(cls, key: bytes) -> "KeyPolicy":
        return cls(KeyMode.EXPLICIT, explicit_key=bytes(key))

    def root_key(self, kdf_salt: bytes, file_nonce: bytes) -> bytes:
        if self.mode is KeyMode.EXPLICIT:
            return self.explicit_key
        return derive_file_key(self.master_secret, kdf_salt, file_nonce)

    def __repr__(self):
        # never leak key material into logs
        return f"KeyPolicy(mode={self.mode.value})"


def derive_file_key(master_secret: bytes, kdf_salt: bytes, file_nonce: bytes) -> bytes:
    if len(master_secret) != 32 or len(kdf_salt) != 16 or len(file_nonce) != 16:
        raise ValueError("derive_file_key expects 32/16/16-byte inputs")
    hkdf = HKDF(algorithm=hashes.SHA256(), length=KEY_SIZE, salt=kdf_salt,
                info=ROOT_INFO + file_nonce)
    return hkdf.derive(master_secret)


def _aead(variant: CipherVariant, key: bytes):
    if variant is CipherVariant.GCM:
        return AESGCM(key)
    return AESCCM(key, tag_length=TAG_SIZE)


def seal(variant: CipherVariant, key: bytes, iv: bytes, plaintext, aad: bytes | None = None):
    """Encrypt one node payload; returns ``(ciphertext, tag)``."""
    out = _aead(variant, key).encrypt(iv, bytes(plaintext), aad)
    return out[:-TAG_SIZE], out[-TAG_SIZE:]


def open_sealed(variant: CipherVariant, key: bytes, iv: bytes, ciphertext, tag: bytes,
                aad: bytes | None = None) -> bytes | None:
    """Decrypt and authenticate; ``None`` on any authentication failure."""
    try:
        return _aead(variant, key).decrypt(iv, bytes(ciphertext) + tag, aad)
    except InvalidTag:
        return None
