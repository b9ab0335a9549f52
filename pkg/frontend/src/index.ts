export * from "./protocol.js";
export * from "./render.js";
export * from "./client.js";
