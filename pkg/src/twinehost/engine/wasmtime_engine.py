"""Adapter for the wasmtime engine (optional dependency).

WASI imports are bound to our own bridge, never to wasmtime's built-in WASI.
wasmtime owns linear memory, so ``custom_allocator`` behaves like
``system_allocator`` here and ``preallocated_buffer`` becomes a hard
store-level memory limit of ``buffer_size`` bytes.
"""
from __future__ import annotations

import ctypes

import wasmtime

from ..wasi.abi import IMPORTS, GuestMemory, WasiAbi
from ..wasi.context import ProcExit
from .base import (TRAP_STATUS, WASM_PAGE, Engine, Instance, LinkError, MemoryMode, MemoryPolicy,
                   Module, Trap, UsageError, ValidationError)

_VT = {"i32": wasmtime.ValType.i32, "i64": wasmtime.ValType.i64}


class WasmtimeModule(Module):
    def __init__(self, engine: wasmtime.Engine, module: wasmtime.Module):
        self.engine = engine
        self.module = module
        self.exports = [e.name for e in module.exports]
        self.imports = [(i.module, i.name) for i in module.imports]
        self.min_pages = 0
        for e in module.exports:
            if isinstance(e.type, wasmtime.MemoryType):
                self.min_pages = e.type.limits.min


class WasmtimeInstance(Instance):
    def __init__(self, module: WasmtimeModule, ctx, policy: MemoryPolicy):
        self.ctx = ctx
        self.started = False
        self.exit_code = None
        self.trap_message = None
        self.store = wasmtime.Store(module.engine)
        if policy.mode is MemoryMode.PREALLOCATED:
            if policy.buffer_size < module.min_pages * WASM_PAGE:
                raise LinkError("preallocated buffer is smaller than the module minimum memory")
            self.store.set_limits(memory_size=policy.buffer_size)
        linker = wasmtime.Linker(module.engine)
        self._memory = None
        self.abi = WasiAbi(ctx, GuestMemory(self._view))
        for mod, name in module.imports:
            if mod != "wasi_snapshot_preview1" or name not in IMPORTS:
                raise LinkError(f"unsupported import {mod}.{name}")
            params, results = IMPORTS[name]
            ftype = wasmtime.FuncType([_VT[p]() for p in params], [_VT[r]() for r in results])
            linker.define_func(mod, name, ftype, self._host(name, bool(results)))
        try:
            self.instance = linker.instantiate(self.store, module.module)
        except (wasmtime.WasmtimeError, wasmtime.Trap) as e:
            raise LinkError(str(e)) from None
        self._memory = self.instance.exports(self.store).get("memory")

    def _view(self):
        n = self._memory.data_len(self.store)
        ptr = self._memory.data_ptr(self.store)
        arr = (ctypes.c_ubyte * n).from_address(ctypes.addressof(ptr.contents))
        return memoryview(arr).cast("B")

    def _host(self, name, has_result):
        def fn(*args):
            res = self.abi.call(name, *args)
            return int(res) if has_result else None
        return fn

    def run_start(self) -> int:
        if self.started:
            raise UsageError("_start already invoked on this instance")
        self.started = True
        start = self.instance.exports(self.store).get("_start")
        try:
            start(self.store)
            self.exit_code = 0
        except ProcExit as e:
            self.exit_code = e.code
        except wasmtime.Trap as e:
            self.trap_message = str(e)
            self.exit_code = TRAP_STATUS
        except wasmtime.WasmtimeError as e:
            cause = e.__cause__ or e.__context__
            if isinstance(cause, ProcExit):
                self.exit_code = cause.code
            else:
                self.trap_message = str(e)
                self.exit_code = TRAP_STATUS
        finally:
            self.ctx.close_all()
        return self.exit_code


class WasmtimeEngine(Engine):
    name = "wasmtime"

    def __init__(self):
        self.engine = wasmtime.Engine()

    def load_module(self, data: bytes) -> WasmtimeModule:
        try:
            m = wasmtime.Module(self.engine, bytes(data))
        except wasmtime.WasmtimeError as e:
            raise ValidationError(str(e)) from None
        wm = WasmtimeModule(self.engine, m)
        if "_start" not in wm.exports:
            raise ValidationError("module does not export a _start function")
        return wm

    def instantiate(self, module, ctx, memory: MemoryPolicy = MemoryPolicy()) -> WasmtimeInstance:
        return WasmtimeInstance(module, ctx, memory)
