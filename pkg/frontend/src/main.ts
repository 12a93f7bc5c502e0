import { ChatApp } from "./chat.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const saved = localStorage.getItem("chatgan.baseUrl");
const app = new ChatApp(root, {
  baseUrl: saved ?? "http://127.0.0.1:8007",
});
root.querySelector(".base-url")?.addEventListener("change", (ev) => {
  localStorage.setItem("chatgan.baseUrl", (ev.target as HTMLInputElement).value);
});
app.start();
