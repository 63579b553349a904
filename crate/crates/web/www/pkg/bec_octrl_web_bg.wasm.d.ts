/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_squeezer_free: (a: number, b: number) => void;
export const split_density: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const squeezer_control: (a: number) => [number, number];
export const squeezer_cost: (a: number) => [number, number, number];
export const squeezer_distribution: (a: number) => [number, number, number, number];
export const squeezer_new: (a: number, b: number, c: number) => [number, number, number];
export const squeezer_squeezing: (a: number) => [number, number, number, number];
export const squeezer_step: (a: number) => [number, number, number];
export const squeezer_times: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
