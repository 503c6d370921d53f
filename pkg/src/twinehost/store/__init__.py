from .crypto import CipherVariant, KeyMode, KeyPolicy, derive_file_key
from .layout import FANOUT, NODE_SIZE, NodeLayout, layout_nodes
from .pfs import (DEFAULT_CACHE_CAPACITY, RECORD_SIZE, SUPERBLOCK_SIZE, BeyondEOFError,
                  FormatError, HostFile, IntegrityError, PfsError, ProtectedFile,
                  SeekRangeError, StoreCounters, StructuralError, Superblock, Variant,
                  VariantMismatchError, VerifyReport, Whence, inspect_superblock,
                  pfs_create, pfs_open, record_offset, verify_file)
