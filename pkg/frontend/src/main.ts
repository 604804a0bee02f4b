import { Workbench } from "./app";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app root element");
}
new Workbench(root).start();
