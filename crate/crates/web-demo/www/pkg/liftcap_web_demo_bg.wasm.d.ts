/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const brzycki: (a: number, b: number) => [number, number, number];
export const demo_bump: (a: number, b: number, c: number, d: number) => [number, number];
export const demo_mass: (a: number) => number;
export const demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const demo_profile_json: (a: number) => [number, number];
export const demo_set_mass: (a: number, b: number) => [number, number];
export const demo_simulate: (a: number) => [number, number, number, number];
export const demo_undo: (a: number) => number;
export const demo_undo_depth: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
