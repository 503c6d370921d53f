from .abi import IMPORTS, GuestMemory, WasiAbi
from .context import (ALL_RIGHTS, CALLS, CLOCK_MONOTONIC, CLOCK_REALTIME, OFLAG_CREAT,
                      OFLAG_DIRECTORY, OFLAG_EXCL, OFLAG_TRUNC, DescKind, Descriptor, FileType,
                      Preopen, ProcExit, Rights, WasiContext)
from .errno import Errno, WasiError
from .host import HostError, UntrustedHost
