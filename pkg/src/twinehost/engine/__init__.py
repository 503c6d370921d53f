from .base import (TRAP_STATUS, Engine, EngineError, Instance, LinearMemory, LinkError,
                   MemoryMode, MemoryPolicy, Module, Trap, UsageError, ValidationError,
                   get_engine)
