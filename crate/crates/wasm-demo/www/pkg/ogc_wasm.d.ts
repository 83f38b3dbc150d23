/* tslint:disable */
/* eslint-disable */

export class Chords {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    energy(i: number): number;
    path(i: number): Float64Array;
    readonly count: number;
}

export class Refined {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly chord: Float64Array;
    readonly half_period: number;
    readonly orbit: Float64Array;
    readonly residual: number;
}

/**
 * Planar domain with its metric; for brake scenes also the mechanical system.
 */
export class Scene {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Jacobi metric of `V = |q|^2 / 2 + epsilon q1^3` at energy `energy`.
     */
    static brake(energy: number, epsilon: number): Scene;
    /**
     * Distinct OGCs from a multistart over a `grid`-point boundary grid.
     */
    find_ogcs(grid: number): Chords;
    /**
     * Ellipse with semi-axes `a`, `b` and the metric `f(r)^2 (I + amplitude P(x))`,
     * `f(r) = 1 + c2 r^2`; `c2 = amplitude = 0` is Euclidean.
     */
    constructor(a: number, b: number, c2: number, amplitude: number);
    /**
     * `n` boundary points, counterclockwise from the positive x axis.
     */
    outline(n: number): Float64Array;
    /**
     * OGC refined from the boundary point at `angle`, with its brake orbit when this is a
     * brake scene. The orbit is empty for geodesic scenes.
     */
    refine(angle: number): Refined;
    /**
     * Geodesic shot inward and orthogonal to the boundary at polar angle `angle`.
     */
    shoot(angle: number): Shot;
}

export class Shot {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly exit_cos: number;
    /**
     * `orthogonal`, `tangent`, `transversal` or `no_return`.
     */
    readonly kind: string;
    readonly length: number;
    readonly points: Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_chords_free: (a: number, b: number) => void;
    readonly __wbg_refined_free: (a: number, b: number) => void;
    readonly __wbg_scene_free: (a: number, b: number) => void;
    readonly __wbg_shot_free: (a: number, b: number) => void;
    readonly chords_count: (a: number) => number;
    readonly chords_energy: (a: number, b: number) => number;
    readonly chords_path: (a: number, b: number) => [number, number];
    readonly refined_chord: (a: number) => [number, number];
    readonly refined_half_period: (a: number) => number;
    readonly refined_orbit: (a: number) => [number, number];
    readonly refined_residual: (a: number) => number;
    readonly scene_brake: (a: number, b: number) => [number, number, number];
    readonly scene_find_ogcs: (a: number, b: number) => [number, number, number];
    readonly scene_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly scene_outline: (a: number, b: number) => [number, number, number, number];
    readonly scene_refine: (a: number, b: number) => [number, number, number];
    readonly scene_shoot: (a: number, b: number) => [number, number, number];
    readonly shot_exit_cos: (a: number) => number;
    readonly shot_kind: (a: number) => [number, number];
    readonly shot_length: (a: number) => number;
    readonly shot_points: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
