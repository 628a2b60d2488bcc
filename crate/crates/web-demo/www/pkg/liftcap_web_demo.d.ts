/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Raises (`sign > 0`) or lowers the capability around `(delta, v)`.
     */
    bump(delta: number, v: number, sign: number): void;
    mass(): number;
    /**
     * Linear template: `force` at rest falling to half at `v_max`.
     */
    constructor(force: number, delta_max: number, v_max: number, mass: number, t_f: number);
    /**
     * Grid and samples as JSON, row-major by position.
     */
    profile_json(): string;
    set_mass(mass: number): void;
    /**
     * Sets under both policies plus the 1RM, as JSON.
     */
    simulate(): string;
    /**
     * Restores the profile before the last bump; false if there is none.
     */
    undo(): boolean;
    undo_depth(): number;
}

/**
 * 1RM from `reps` repetitions at `weight`, in the unit of `weight`.
 */
export function brzycki(weight: number, reps: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly brzycki: (a: number, b: number) => [number, number, number];
    readonly demo_bump: (a: number, b: number, c: number, d: number) => [number, number];
    readonly demo_mass: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_profile_json: (a: number) => [number, number];
    readonly demo_set_mass: (a: number, b: number) => [number, number];
    readonly demo_simulate: (a: number) => [number, number, number, number];
    readonly demo_undo: (a: number) => number;
    readonly demo_undo_depth: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
