/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const coupled_paths: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const put_boundary: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const stopping_time_histogram: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
