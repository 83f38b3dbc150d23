/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_chords_free: (a: number, b: number) => void;
export const __wbg_refined_free: (a: number, b: number) => void;
export const __wbg_scene_free: (a: number, b: number) => void;
export const __wbg_shot_free: (a: number, b: number) => void;
export const chords_count: (a: number) => number;
export const chords_energy: (a: number, b: number) => number;
export const chords_path: (a: number, b: number) => [number, number];
export const refined_chord: (a: number) => [number, number];
export const refined_half_period: (a: number) => number;
export const refined_orbit: (a: number) => [number, number];
export const refined_residual: (a: number) => number;
export const scene_brake: (a: number, b: number) => [number, number, number];
export const scene_find_ogcs: (a: number, b: number) => [number, number, number];
export const scene_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const scene_outline: (a: number, b: number) => [number, number, number, number];
export const scene_refine: (a: number, b: number) => [number, number, number];
export const scene_shoot: (a: number, b: number) => [number, number, number];
export const shot_exit_cos: (a: number) => number;
export const shot_kind: (a: number) => [number, number];
export const shot_length: (a: number) => number;
export const shot_points: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
