import { mountConsole } from "./app.js";

const root = document.getElementById("app");
if (root) mountConsole(root);
